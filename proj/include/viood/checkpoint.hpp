#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "viood/scoring.hpp"

namespace viood::io {

// Header-plus-blob container: JSON manifest (name, shape, dtype, offset,
// length) followed by raw little-endian parameter blocks.
class Checkpoint {
 public:
  nlohmann::json header;

  Checkpoint() {
    header["version"] = 1;
    header["entries"] = nlohmann::json::array();
  }

  template <typename T>
  void add(const std::string& name, const std::vector<int>& shape, const std::vector<T>& data);

  bool has(const std::string& name) const;
  std::vector<int> shape_of(const std::string& name) const;
  std::string dtype_of(const std::string& name) const;

  template <typename T>
  std::vector<T> get(const std::string& name) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  const std::vector<std::uint8_t>& blob() const { return blob_; }

 private:
  const nlohmann::json& find(const std::string& name) const;
  std::vector<std::uint8_t> blob_;
};

void put_gaussian_bank(Checkpoint& ckpt, const ood::GaussianBank& bank,
                       const std::string& prefix = "bank");
ood::GaussianBank get_gaussian_bank(const Checkpoint& ckpt, const std::string& prefix = "bank");
void put_validation_bank(Checkpoint& ckpt, const ood::ValidationBank& bank,
                         const std::string& prefix = "valbank");
ood::ValidationBank get_validation_bank(const Checkpoint& ckpt,
                                        const std::string& prefix = "valbank");

}  // namespace viood::io
