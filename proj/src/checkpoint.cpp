#include "viood/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "viood/error.hpp"
#include "viood/tensor.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace viood::io {

namespace {
constexpr char kMagic[8] = {'V', 'I', 'O', 'O', 'D', 'C', 'K', '1'};

template <typename T>
const char* dtype_name();
template <>
const char* dtype_name<float>() {
  return "f32";
}
template <>
const char* dtype_name<double>() {
  return "f64";
}
}  // namespace

template <typename T>
void Checkpoint::add(const std::string& name, const std::vector<int>& shape,
                     const std::vector<T>& data) {
  if (has(name)) throw ContractError("checkpoint: duplicate entry '" + name + "'");
  if (ad::shape_numel(shape) != data.size())
    throw ShapeError("checkpoint: entry '" + name + "' shape does not match data length");
  nlohmann::json e;
  e["name"] = name;
  e["shape"] = shape;
  e["dtype"] = dtype_name<T>();
  e["offset"] = blob_.size();
  e["nbytes"] = data.size() * sizeof(T);
  header["entries"].push_back(e);
  const std::size_t old = blob_.size();
  blob_.resize(old + data.size() * sizeof(T));
  std::memcpy(blob_.data() + old, data.data(), data.size() * sizeof(T));
}

template void Checkpoint::add<float>(const std::string&, const std::vector<int>&,
                                     const std::vector<float>&);
template void Checkpoint::add<double>(const std::string&, const std::vector<int>&,
                                      const std::vector<double>&);

const nlohmann::json& Checkpoint::find(const std::string& name) const {
  for (const auto& e : header["entries"])
    if (e["name"] == name) return e;
  throw ContractError("checkpoint: missing entry '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& e : header["entries"])
    if (e["name"] == name) return true;
  return false;
}

std::vector<int> Checkpoint::shape_of(const std::string& name) const {
  return find(name)["shape"].get<std::vector<int>>();
}

std::string Checkpoint::dtype_of(const std::string& name) const {
  return find(name)["dtype"].get<std::string>();
}

template <typename T>
std::vector<T> Checkpoint::get(const std::string& name) const {
  const auto& e = find(name);
  if (e["dtype"].get<std::string>() != dtype_name<T>())
    throw ContractError("checkpoint: entry '" + name + "' has dtype " +
                        e["dtype"].get<std::string>() + ", requested " + dtype_name<T>());
  const std::size_t off = e["offset"].get<std::size_t>();
  const std::size_t nb = e["nbytes"].get<std::size_t>();
  if (off + nb > blob_.size()) throw ContractError("checkpoint: entry '" + name + "' out of blob");
  std::vector<T> out(nb / sizeof(T));
  std::memcpy(out.data(), blob_.data() + off, nb);
  return out;
}

template std::vector<float> Checkpoint::get<float>(const std::string&) const;
template std::vector<double> Checkpoint::get<double>(const std::string&) const;

void Checkpoint::save(const std::string& path) const {
  // Verify that the manifest tiles the blob exactly.
  std::size_t expect = 0;
  for (const auto& e : header["entries"]) {
    if (e["offset"].get<std::size_t>() != expect)
      throw ContractError("checkpoint: manifest offsets do not tile the blob");
    expect += e["nbytes"].get<std::size_t>();
  }
  if (expect != blob_.size())
    throw ContractError("checkpoint: manifest length does not match blob size");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::string hdr = header.dump();
  const std::uint64_t hlen = hdr.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  out.write(reinterpret_cast<const char*>(blob_.data()), static_cast<std::streamsize>(blob_.size()));
  if (!out) throw IngestError("checkpoint write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CompatError("not a checkpoint file: " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string hdr(hlen, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw CompatError("truncated checkpoint header: " + path);
  Checkpoint c;
  try {
    c.header = nlohmann::json::parse(hdr);
  } catch (const nlohmann::json::exception& e) {
    throw CompatError("corrupt checkpoint header: " + std::string(e.what()));
  }
  std::size_t total = 0;
  for (const auto& e : c.header["entries"]) total += e["nbytes"].get<std::size_t>();
  c.blob_.resize(total);
  in.read(reinterpret_cast<char*>(c.blob_.data()), static_cast<std::streamsize>(total));
  if (!in) throw CompatError("truncated checkpoint blob: " + path);
  return c;
}

void put_gaussian_bank(Checkpoint& ckpt, const ood::GaussianBank& bank,
                       const std::string& prefix) {
  ckpt.add(prefix + ".means", {bank.k_classes, bank.dim}, bank.means);
  ckpt.add(prefix + ".cov", {bank.dim, bank.dim}, bank.cov);
  ckpt.add(prefix + ".precision", {bank.dim, bank.dim}, bank.precision);
  ckpt.add(prefix + ".eps", {1}, std::vector<double>{bank.shrinkage_eps});
}

ood::GaussianBank get_gaussian_bank(const Checkpoint& ckpt, const std::string& prefix) {
  ood::GaussianBank bank;
  const auto shape = ckpt.shape_of(prefix + ".means");
  bank.k_classes = shape[0];
  bank.dim = shape[1];
  bank.means = ckpt.get<double>(prefix + ".means");
  bank.cov = ckpt.get<double>(prefix + ".cov");
  bank.precision = ckpt.get<double>(prefix + ".precision");
  bank.shrinkage_eps = ckpt.get<double>(prefix + ".eps")[0];
  return bank;
}

void put_validation_bank(Checkpoint& ckpt, const ood::ValidationBank& bank,
                         const std::string& prefix) {
  ckpt.add(prefix + ".rows", {bank.count, bank.dim}, bank.rows);
}

ood::ValidationBank get_validation_bank(const Checkpoint& ckpt, const std::string& prefix) {
  ood::ValidationBank bank;
  const auto shape = ckpt.shape_of(prefix + ".rows");
  bank.count = shape[0];
  bank.dim = shape[1];
  bank.rows = ckpt.get<double>(prefix + ".rows");
  return bank;
}

}  // namespace viood::io
