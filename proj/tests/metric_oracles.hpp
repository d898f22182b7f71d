#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "viood/metrics.hpp"
#include "viood/rng.hpp"

// Brute-force counterparts of the production metrics, kept deliberately
// naive (O(n^2), exhaustive sweeps) so they share no code with the library.
namespace oracle {

inline double auroc(const viood::eval::ScoredSet& s) {
  double acc = 0;
  for (double i : s.id_scores)
    for (double o : s.ood_scores) acc += i > o ? 1.0 : (i == o ? 0.5 : 0.0);
  return acc / (static_cast<double>(s.id_scores.size()) * s.ood_scores.size());
}

inline double far_at_95(const viood::eval::ScoredSet& s, double tpr = 0.95) {
  std::set<double> cand(s.id_scores.begin(), s.id_scores.end());
  cand.insert(s.ood_scores.begin(), s.ood_scores.end());
  const double np = static_cast<double>(s.id_scores.size());
  bool found = false;
  double best_tau = 0;
  for (double tau : cand) {
    std::size_t tp = 0;
    for (double v : s.id_scores) tp += v >= tau;
    if (static_cast<double>(tp) / np + 1e-12 >= tpr) {
      if (!found || tau > best_tau) best_tau = tau;
      found = true;
    }
  }
  std::size_t fp = 0;
  for (double v : s.ood_scores) fp += v >= best_tau;
  return static_cast<double>(fp) / static_cast<double>(s.ood_scores.size());
}

inline double aupr(const viood::eval::ScoredSet& s) {
  // Step-wise PR curve swept over every distinct threshold, descending.
  std::set<double, std::greater<double>> cand(s.id_scores.begin(), s.id_scores.end());
  cand.insert(s.ood_scores.begin(), s.ood_scores.end());
  const double np = static_cast<double>(s.id_scores.size());
  double ap = 0, prev_rec = 0;
  for (double tau : cand) {
    std::size_t tp = 0, fp = 0;
    for (double v : s.id_scores) tp += v >= tau;
    for (double v : s.ood_scores) fp += v >= tau;
    const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double rec = static_cast<double>(tp) / np;
    ap += (rec - prev_rec) * prec;
    prev_rec = rec;
  }
  return ap;
}

inline double id_accuracy(const std::vector<std::vector<double>>& logits,
                          const std::vector<int>& labels) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits[i].size(); ++k)
      if (logits[i][k] > logits[i][best]) best = k;
    hit += static_cast<int>(best) == labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(logits.size());
}

// Random scored set with deliberate ties (scores drawn off a small grid).
inline viood::eval::ScoredSet random_set(viood::Rng& rng, std::size_t max_n = 200) {
  viood::eval::ScoredSet s;
  const std::size_t ni = 1 + rng.below(max_n);
  const std::size_t no = 1 + rng.below(max_n);
  const bool gridded = rng.below(2) == 0;
  auto draw = [&]() {
    if (gridded) return static_cast<double>(rng.below(12)) / 4.0;  // many ties
    return rng.uniform(-3.0, 3.0);
  };
  for (std::size_t i = 0; i < ni; ++i) s.id_scores.push_back(draw());
  for (std::size_t i = 0; i < no; ++i) s.ood_scores.push_back(draw());
  return s;
}

}  // namespace oracle
