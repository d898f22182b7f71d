#pragma once

#include <cstdint>
#include <vector>

namespace viood::ood {

// Per-class means with one shared (pooled, shrunk) covariance, for the
// Mahalanobis confidence score.
struct GaussianBank {
  int k_classes = 0;
  int dim = 0;
  std::vector<double> means;      // k_classes x dim, row-major
  std::vector<double> cov;        // dim x dim, includes the shrinkage term
  std::vector<double> precision;  // dim x dim
  double shrinkage_eps = 0.0;
};

// Unit-normalized held-out representations for the cosine score.
struct ValidationBank {
  int dim = 0;
  std::vector<double> rows;  // count x dim, every row unit L2 norm
  int count = 0;
};

// latents: N x dim (row-major); every class must have >= 2 examples.
GaussianBank fit_gaussian_bank(const std::vector<double>& latents, int dim,
                               const std::vector<int>& labels, int k_classes);

// Capped, seeded subsample of validation latents, stored unit-normalized.
ValidationBank build_validation_bank(const std::vector<double>& latents, int dim,
                                     std::size_t max_size = 5000, std::uint64_t seed = 0);

// All scores share the orientation: larger means more ID-like.
double maha_score(const std::vector<double>& z, const GaussianBank& bank);
double msp_score(const std::vector<double>& logits);
double energy_score(const std::vector<double>& logits);
double cosine_score(const std::vector<double>& z, const ValidationBank& bank);

}  // namespace viood::ood
