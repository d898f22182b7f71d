#include "viood/config.hpp"

#include <algorithm>
#include <fstream>

#include "viood/error.hpp"

namespace viood::io {

void RunConfig::validate() const {
  encoder.validate();
  if (objective != "joint" && objective != "disc")
    throw ContractError("config: objective must be 'joint' or 'disc'");
  if (epochs < 1) throw ContractError("config: epochs must be >= 1");
  if (batch_size < 1) throw ContractError("config: batch_size must be >= 1");
  if (lr <= 0.0) throw ContractError("config: lr must be positive");
  if (precision != "f32" && precision != "f64")
    throw ContractError("config: precision must be 'f32' or 'f64'");
  if (scores.empty()) throw ContractError("config: at least one score function required");
  for (const auto& s : scores)
    if (std::find(kAllScores.begin(), kAllScores.end(), s) == kAllScores.end())
      throw ContractError("config: unknown score function '" + s + "'");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["encoder"] = {{"layers", encoder.layers},   {"d_model", encoder.d_model},
                  {"heads", encoder.heads},     {"ffn_dim", encoder.ffn_dim},
                  {"max_len", encoder.max_len}};
  j["head"] = {{"d_z", head.d_z},
               {"decoder_hidden", head.decoder_hidden},
               {"anneal_fraction", head.anneal_fraction}};
  j["objective"] = objective;
  j["epochs"] = epochs;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["scores"] = scores;
  j["deterministic_inference"] = deterministic_inference;
  j["precision"] = precision;
  j["data"] = {{"id_train", data.id_train},
               {"id_val", data.id_val},
               {"id_test", data.id_test},
               {"ood_test", data.ood_test}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    c.encoder.layers = e.value("layers", c.encoder.layers);
    c.encoder.d_model = e.value("d_model", c.encoder.d_model);
    c.encoder.heads = e.value("heads", c.encoder.heads);
    c.encoder.ffn_dim = e.value("ffn_dim", c.encoder.ffn_dim);
    c.encoder.max_len = e.value("max_len", c.encoder.max_len);
  }
  if (j.contains("head")) {
    const auto& h = j["head"];
    c.head.d_z = h.value("d_z", c.head.d_z);
    c.head.decoder_hidden = h.value("decoder_hidden", c.head.decoder_hidden);
    c.head.anneal_fraction = h.value("anneal_fraction", c.head.anneal_fraction);
  }
  c.objective = j.value("objective", c.objective);
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("scores")) c.scores = j["scores"].get<std::vector<std::string>>();
  c.deterministic_inference = j.value("deterministic_inference", c.deterministic_inference);
  c.precision = j.value("precision", c.precision);
  if (j.contains("data")) {
    const auto& d = j["data"];
    c.data.id_train = d.value("id_train", std::string());
    c.data.id_val = d.value("id_val", std::string());
    c.data.id_test = d.value("id_test", std::string());
    if (d.contains("ood_test")) c.data.ood_test = d["ood_test"].get<std::vector<std::string>>();
  }
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError("config file " + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace viood::io
