#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "viood/data.hpp"
#include "viood/encoder.hpp"
#include "viood/vi_head.hpp"

namespace viood::io {

inline const std::vector<std::string> kAllScores = {"msp", "energy", "maha", "cosine"};

struct RunConfig {
  nn::EncoderConfig encoder;
  vi::VIHeadConfig head;  // k_classes is filled from the dataset
  std::string objective = "joint";  // joint | disc
  int epochs = 20;
  double lr = 1e-3;
  double weight_decay = 0.0;
  int batch_size = 32;
  std::uint64_t seed = 0;
  std::vector<std::string> scores = kAllScores;
  // Inference uses z = mu by default; the annealed posterior keeps sigma near 1,
  // so a sampled z buries the class/OOD signal in noise at evaluation time.
  bool deterministic_inference = true;
  std::string precision = "f32";  // f32 | f64
  DatasetSpec data;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
};

}  // namespace viood::io
