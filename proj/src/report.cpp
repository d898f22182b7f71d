#include "viood/report.hpp"

#include <iomanip>
#include <sstream>

#include "viood/error.hpp"

namespace viood::io {

void EvalReport::compute_macro() {
  macro.assign(score_names.size(), MetricCell{});
  if (ood_names.empty()) return;
  for (std::size_t s = 0; s < score_names.size(); ++s) {
    for (std::size_t o = 0; o < ood_names.size(); ++o) {
      macro[s].auroc += cells[o][s].auroc;
      macro[s].far95 += cells[o][s].far95;
      macro[s].aupr += cells[o][s].aupr;
    }
    const double n = static_cast<double>(ood_names.size());
    macro[s].auroc /= n;
    macro[s].far95 /= n;
    macro[s].aupr /= n;
  }
}

namespace {
nlohmann::json cell_json(const MetricCell& c) {
  return {{"auroc", c.auroc}, {"far95", c.far95}, {"aupr", c.aupr}};
}
}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["objective"] = objective;
  j["seed"] = seed;
  j["wall_seconds"] = wall_seconds;
  j["id_accuracy"] = id_accuracy;
  j["score_names"] = score_names;
  j["ood_names"] = ood_names;
  j["results"] = nlohmann::json::object();
  for (std::size_t o = 0; o < ood_names.size(); ++o) {
    nlohmann::json per;
    for (std::size_t s = 0; s < score_names.size(); ++s)
      per[score_names[s]] = cell_json(cells[o][s]);
    j["results"][ood_names[o]] = per;
  }
  j["macro"] = nlohmann::json::object();
  for (std::size_t s = 0; s < score_names.size(); ++s)
    j["macro"][score_names[s]] = cell_json(macro[s]);
  if (!s_weights.empty()) j["s_weights"] = s_weights;
  return j;
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "objective: " << objective << "   seed: " << seed << "   id accuracy: " << id_accuracy
     << "%\n\n";
  os << std::left << std::setw(20) << "ood set" << std::setw(10) << "score" << std::right
     << std::setw(10) << "AUROC" << std::setw(10) << "FAR@95" << std::setw(10) << "AUPR" << "\n";
  auto row = [&](const std::string& set, const std::string& score, const MetricCell& c) {
    os << std::left << std::setw(20) << set << std::setw(10) << score << std::right
       << std::setw(10) << c.auroc << std::setw(10) << c.far95 << std::setw(10) << c.aupr << "\n";
  };
  for (std::size_t o = 0; o < ood_names.size(); ++o)
    for (std::size_t s = 0; s < score_names.size(); ++s)
      row(ood_names[o], score_names[s], cells[o][s]);
  for (std::size_t s = 0; s < score_names.size(); ++s) row("macro-avg", score_names[s], macro[s]);
  if (!s_weights.empty()) {
    os << "\ncombination weights:";
    for (double w : s_weights) os << " " << std::setprecision(4) << w;
    os << "\n";
  }
  return os.str();
}

nlohmann::json ProbeTable::to_json() const {
  nlohmann::json j;
  j["func_names"] = func_names;
  j["ood_names"] = ood_names;
  j["auroc"] = auroc;
  return j;
}

std::string ProbeTable::to_table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(8) << "layer";
  for (const auto& o : ood_names)
    for (const auto& f : func_names) os << std::right << std::setw(16) << (o + "/" + f);
  os << "\n";
  for (std::size_t l = 0; l < auroc.size(); ++l) {
    os << std::left << std::setw(8) << l;
    for (const auto& per_ood : auroc[l])
      for (double v : per_ood) os << std::right << std::setw(16) << v;
    os << "\n";
  }
  return os.str();
}

nlohmann::json TrainLog::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : epochs) {
    j.push_back({{"epoch", e.epoch},
                 {"total", e.total},
                 {"ce", e.ce},
                 {"recon", e.recon},
                 {"kl", e.kl},
                 {"beta", e.beta},
                 {"s_weights", e.s_weights},
                 {"batch_order_hash", e.batch_order_hash}});
  }
  return j;
}

}  // namespace viood::io
