#pragma once

#include <vector>

namespace viood::eval {

// ID scores are the positives, OOD scores the negatives.
struct ScoredSet {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
};

// Probability that an ID example outranks an OOD one; ties count 1/2.
double auroc(const ScoredSet& set);

// FPR on OOD at the least-strict threshold with TPR >= 0.95 on ID.
double far_at_95(const ScoredSet& set, double tpr = 0.95);

// Average precision; equal scores are treated as one block.
double aupr(const ScoredSet& set);

// Argmax accuracy; ties resolved to the lowest class index.
double id_accuracy(const std::vector<std::vector<double>>& logits, const std::vector<int>& labels);

}  // namespace viood::eval
