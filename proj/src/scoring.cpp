#include "viood/scoring.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "viood/error.hpp"
#include "viood/rng.hpp"

namespace viood::ood {

namespace {
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}

GaussianBank fit_gaussian_bank(const std::vector<double>& latents, int dim,
                               const std::vector<int>& labels, int k_classes) {
  if (dim < 1 || k_classes < 1) throw FitError("gaussian bank: need dim >= 1 and k >= 1");
  const std::size_t n = labels.size();
  if (latents.size() != n * static_cast<std::size_t>(dim))
    throw FitError("gaussian bank: latent buffer does not match labels x dim");
  std::vector<std::size_t> counts(static_cast<std::size_t>(k_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= k_classes) throw FitError("gaussian bank: label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  for (int k = 0; k < k_classes; ++k)
    if (counts[static_cast<std::size_t>(k)] < 2)
      throw FitError("gaussian bank: class " + std::to_string(k) + " has " +
                     std::to_string(counts[static_cast<std::size_t>(k)]) +
                     " examples, need >= 2");

  GaussianBank bank;
  bank.k_classes = k_classes;
  bank.dim = dim;
  bank.means.assign(static_cast<std::size_t>(k_classes) * dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = latents.data() + i * dim;
    double* mu = bank.means.data() + static_cast<std::size_t>(labels[i]) * dim;
    for (int d = 0; d < dim; ++d) mu[d] += z[d];
  }
  for (int k = 0; k < k_classes; ++k) {
    double* mu = bank.means.data() + static_cast<std::size_t>(k) * dim;
    for (int d = 0; d < dim; ++d) mu[d] /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
  }

  // Pooled within-class covariance, averaged over all N examples.
  Mat sigma = Mat::Zero(dim, dim);
  Eigen::VectorXd c(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = latents.data() + i * dim;
    const double* mu = bank.means.data() + static_cast<std::size_t>(labels[i]) * dim;
    for (int d = 0; d < dim; ++d) c(d) = z[d] - mu[d];
    sigma.noalias() += c * c.transpose();
  }
  sigma /= static_cast<double>(n);

  double base = sigma.trace() / static_cast<double>(dim);
  if (base <= 0.0) base = 1.0;
  double scale = 1e-6;
  Mat shrunk;
  Eigen::LLT<Mat> llt;
  while (true) {
    bank.shrinkage_eps = scale * base;
    shrunk = sigma + bank.shrinkage_eps * Mat::Identity(dim, dim);
    llt.compute(shrunk);
    if (llt.info() == Eigen::Success) break;
    scale *= 10.0;
    if (scale > 1e-2)
      throw FitError("gaussian bank: covariance stayed singular after shrinkage escalation");
  }
  bank.cov.assign(shrunk.data(), shrunk.data() + static_cast<std::size_t>(dim) * dim);
  Mat prec = llt.solve(Mat::Identity(dim, dim));
  bank.precision.assign(prec.data(), prec.data() + static_cast<std::size_t>(dim) * dim);
  return bank;
}

ValidationBank build_validation_bank(const std::vector<double>& latents, int dim,
                                     std::size_t max_size, std::uint64_t seed) {
  if (dim < 1) throw FitError("validation bank: need dim >= 1");
  const std::size_t n = latents.size() / static_cast<std::size_t>(dim);
  if (n < 1) throw FitError("validation bank: need at least one latent");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n > max_size) {
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(max_size);
    std::sort(idx.begin(), idx.end());
  }
  ValidationBank bank;
  bank.dim = dim;
  bank.count = static_cast<int>(idx.size());
  bank.rows.reserve(idx.size() * static_cast<std::size_t>(dim));
  for (std::size_t i : idx) {
    const double* z = latents.data() + i * dim;
    double norm = 0.0;
    for (int d = 0; d < dim; ++d) norm += z[d] * z[d];
    norm = std::sqrt(norm);
    if (norm <= 0.0) throw ScoreError("validation bank: zero-norm latent at index " +
                                      std::to_string(i));
    for (int d = 0; d < dim; ++d) bank.rows.push_back(z[d] / norm);
  }
  return bank;
}

double maha_score(const std::vector<double>& z, const GaussianBank& bank) {
  if (static_cast<int>(z.size()) != bank.dim)
    throw ScoreError("maha: latent dim mismatch");
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> c(static_cast<std::size_t>(bank.dim));
  for (int k = 0; k < bank.k_classes; ++k) {
    const double* mu = bank.means.data() + static_cast<std::size_t>(k) * bank.dim;
    for (int d = 0; d < bank.dim; ++d) c[static_cast<std::size_t>(d)] = z[static_cast<std::size_t>(d)] - mu[d];
    double q = 0.0;
    for (int i = 0; i < bank.dim; ++i) {
      const double* row = bank.precision.data() + static_cast<std::size_t>(i) * bank.dim;
      double acc = 0.0;
      for (int j = 0; j < bank.dim; ++j) acc += row[j] * c[static_cast<std::size_t>(j)];
      q += c[static_cast<std::size_t>(i)] * acc;
    }
    best = std::min(best, q);
  }
  return -best;
}

double msp_score(const std::vector<double>& logits) {
  if (logits.size() < 2) throw ScoreError("msp: need at least 2 logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double v : logits) denom += std::exp(v - mx);
  return 1.0 / denom;  // exp(mx - mx) / sum
}

double energy_score(const std::vector<double>& logits) {
  if (logits.size() < 2) throw ScoreError("energy: need at least 2 logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - mx);
  return mx + std::log(s);
}

double cosine_score(const std::vector<double>& z, const ValidationBank& bank) {
  if (static_cast<int>(z.size()) != bank.dim) throw ScoreError("cosine: latent dim mismatch");
  double norm = 0.0;
  for (double v : z) norm += v * v;
  norm = std::sqrt(norm);
  if (norm <= 0.0) throw ScoreError("cosine: zero-norm query latent");
  double best = -1.0;
  for (int r = 0; r < bank.count; ++r) {
    const double* row = bank.rows.data() + static_cast<std::size_t>(r) * bank.dim;
    double dot = 0.0;
    for (int d = 0; d < bank.dim; ++d) dot += row[d] * z[static_cast<std::size_t>(d)];
    best = std::max(best, dot / norm);
  }
  return best;
}

}  // namespace viood::ood
