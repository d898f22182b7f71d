#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace viood::io {

// Metric values in percent.
struct MetricCell {
  double auroc = 0.0;
  double far95 = 0.0;
  double aupr = 0.0;
};

struct EvalReport {
  std::string objective;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  double id_accuracy = 0.0;  // percent
  std::vector<std::string> score_names;
  std::vector<std::string> ood_names;
  std::vector<std::vector<MetricCell>> cells;  // [ood][score]
  std::vector<MetricCell> macro;               // [score], mean across OOD sets
  std::vector<double> s_weights;               // empty for the discriminative model

  void compute_macro();
  nlohmann::json to_json() const;
  std::string to_table() const;
};

struct ProbeTable {
  std::vector<std::string> func_names;  // distance scores only
  std::vector<std::string> ood_names;
  // auroc[layer][ood][func], percent
  std::vector<std::vector<std::vector<double>>> auroc;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

struct EpochLog {
  int epoch = 0;
  double total = 0.0, ce = 0.0, recon = 0.0, kl = 0.0, beta = 0.0;
  std::vector<double> s_weights;
  std::string batch_order_hash;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  nlohmann::json to_json() const;
};

}  // namespace viood::io
