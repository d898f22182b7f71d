#include "viood/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "viood/error.hpp"

namespace viood::eval {

namespace {
void validate(const ScoredSet& set) {
  if (set.id_scores.empty() || set.ood_scores.empty())
    throw MetricError("scored set: both ID and OOD sides must be nonempty");
  for (double v : set.id_scores)
    if (!std::isfinite(v)) throw MetricError("scored set: non-finite ID score");
  for (double v : set.ood_scores)
    if (!std::isfinite(v)) throw MetricError("scored set: non-finite OOD score");
}
}  // namespace

double auroc(const ScoredSet& set) {
  validate(set);
  const std::size_t np = set.id_scores.size(), nn = set.ood_scores.size();
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(np + nn);
  for (double v : set.id_scores) items.push_back({v, true});
  for (double v : set.ood_scores) items.push_back({v, false});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score < b.score; });
  // Midranks over tie groups.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t)
      if (items[t].positive) rank_sum_pos += midrank;
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(np) * static_cast<double>(np + 1);
  return u / (static_cast<double>(np) * static_cast<double>(nn));
}

double far_at_95(const ScoredSet& set, double tpr) {
  validate(set);
  const std::size_t np = set.id_scores.size();
  std::vector<double> ids = set.id_scores;
  std::sort(ids.begin(), ids.end(), std::greater<>());
  const std::size_t need =
      static_cast<std::size_t>(std::ceil(tpr * static_cast<double>(np) - 1e-12));
  const double tau = ids[std::min(np, std::max<std::size_t>(need, 1)) - 1];
  std::size_t fp = 0;
  for (double v : set.ood_scores)
    if (v >= tau) ++fp;
  return static_cast<double>(fp) / static_cast<double>(set.ood_scores.size());
}

double aupr(const ScoredSet& set) {
  validate(set);
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(set.id_scores.size() + set.ood_scores.size());
  for (double v : set.id_scores) items.push_back({v, true});
  for (double v : set.ood_scores) items.push_back({v, false});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score > b.score; });
  const double npos = static_cast<double>(set.id_scores.size());
  double tp = 0.0, fp = 0.0, ap = 0.0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    double block_tp = 0.0, block_fp = 0.0;
    while (j < items.size() && items[j].score == items[i].score) {
      if (items[j].positive)
        block_tp += 1.0;
      else
        block_fp += 1.0;
      ++j;
    }
    tp += block_tp;
    fp += block_fp;
    if (block_tp > 0.0) ap += block_tp * (tp / (tp + fp));
    i = j;
  }
  return ap / npos;
}

double id_accuracy(const std::vector<std::vector<double>>& logits,
                   const std::vector<int>& labels) {
  if (logits.size() != labels.size())
    throw MetricError("id_accuracy: logits/labels size mismatch");
  if (logits.empty()) throw MetricError("id_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& row = logits[i];
    if (labels[i] < 0 || labels[i] >= static_cast<int>(row.size()))
      throw MetricError("id_accuracy: label out of range at row " + std::to_string(i));
    int best = 0;
    for (int k = 1; k < static_cast<int>(row.size()); ++k)
      if (row[static_cast<std::size_t>(k)] > row[static_cast<std::size_t>(best)]) best = k;
    if (best == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.size());
}

}  // namespace viood::eval
