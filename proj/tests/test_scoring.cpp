#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "viood/error.hpp"
#include "viood/rng.hpp"
#include "viood/scoring.hpp"

using namespace viood;
using ood::GaussianBank;
using ood::ValidationBank;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace {

GaussianBank identity_bank(const std::vector<std::vector<double>>& means) {
  GaussianBank bank;
  bank.k_classes = static_cast<int>(means.size());
  bank.dim = static_cast<int>(means[0].size());
  for (const auto& m : means) bank.means.insert(bank.means.end(), m.begin(), m.end());
  bank.cov.assign(static_cast<std::size_t>(bank.dim) * bank.dim, 0.0);
  for (int i = 0; i < bank.dim; ++i) bank.cov[static_cast<std::size_t>(i) * bank.dim + i] = 1.0;
  bank.precision = bank.cov;
  return bank;
}

std::vector<double> random_latents(int n, int dim, Rng& rng, double spread = 1.0) {
  std::vector<double> out(static_cast<std::size_t>(n) * dim);
  for (auto& v : out) v = rng.normal() * spread;
  return out;
}

}  // namespace

TEST_CASE("gaussian bank hand-computed covariance") {
  std::vector<double> lat = {0, 0, 2, 0, 0, 2, 2, 2};
  auto bank = ood::fit_gaussian_bank(lat, 2, {0, 0, 0, 0}, 1);
  CHECK(bank.means[0] == doctest::Approx(1.0));
  CHECK(bank.means[1] == doctest::Approx(1.0));
  CHECK(bank.cov[0] == doctest::Approx(1.0 + bank.shrinkage_eps));
  CHECK(bank.cov[1] == doctest::Approx(0.0));
  CHECK(bank.cov[2] == doctest::Approx(0.0));
  CHECK(bank.cov[3] == doctest::Approx(1.0 + bank.shrinkage_eps));
  CHECK(bank.shrinkage_eps == doctest::Approx(1e-6).epsilon(0.01));
}

TEST_CASE("gaussian bank on whitened data is near identity") {
  Rng rng(1);
  const int n = 200, d = 3;
  auto raw = random_latents(n, d, rng);
  // whiten: subtract mean, then multiply by the inverse covariance square root
  Eigen::Map<Mat> X(raw.data(), n, d);
  Eigen::RowVectorXd mu = X.colwise().mean();
  Mat C = (X.rowwise() - mu);
  Mat cov = C.transpose() * C / double(n);
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  Mat W = es.operatorInverseSqrt();
  Mat white = C * W;
  std::vector<double> lat(white.data(), white.data() + n * d);

  auto bank = ood::fit_gaussian_bank(lat, d, std::vector<int>(n, 0), 1);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const double want = i == j ? 1.0 + bank.shrinkage_eps : 0.0;
      CHECK(std::abs(bank.cov[static_cast<std::size_t>(i) * d + j] - want) < 1e-6 + bank.shrinkage_eps);
    }
}

TEST_CASE("pooling two classes with identical spread") {
  Rng rng(2);
  const int n = 100, d = 2;
  auto noise = random_latents(n, d, rng);
  std::vector<double> lat;
  std::vector<int> labels;
  for (int rep = 0; rep < 2; ++rep)  // same within-class offsets, shifted means
    for (int i = 0; i < n; ++i) {
      lat.push_back(noise[static_cast<std::size_t>(i) * d] + rep * 10.0);
      lat.push_back(noise[static_cast<std::size_t>(i) * d + 1] - rep * 10.0);
      labels.push_back(rep);
    }
  auto pooled = ood::fit_gaussian_bank(lat, d, labels, 2);
  auto single = ood::fit_gaussian_bank(noise, d, std::vector<int>(n, 0), 1);
  for (std::size_t i = 0; i < pooled.cov.size(); ++i)
    CHECK(pooled.cov[i] == doctest::Approx(single.cov[i]).epsilon(1e-9));
}

TEST_CASE("gaussian bank rejects thin classes") {
  std::vector<double> lat = {0, 0, 1, 1, 2, 2};
  CHECK_THROWS_AS(ood::fit_gaussian_bank(lat, 2, {0, 0, 1}, 2), FitError);
  CHECK_THROWS_AS(ood::fit_gaussian_bank(lat, 2, {0, 0, 5}, 2), FitError);
  CHECK_THROWS_AS(ood::fit_gaussian_bank(lat, 4, {0, 0, 0}, 1), FitError);  // size mismatch
}

TEST_CASE("shrinkage escalates on degenerate covariance") {
  // all points identical per class: zero covariance, still fittable
  std::vector<double> lat = {1, 1, 1, 1, 5, 5, 5, 5};
  auto bank = ood::fit_gaussian_bank(lat, 2, {0, 0, 1, 1}, 2);
  CHECK(bank.shrinkage_eps > 0.0);
  CHECK(std::isfinite(ood::maha_score({1, 1}, bank)));
}

TEST_CASE("mahalanobis analytic cases") {
  auto bank = identity_bank({{0, 0}});
  CHECK(ood::maha_score({3, 4}, bank) == doctest::Approx(-25.0));
  CHECK(ood::maha_score({0, 0}, bank) == doctest::Approx(0.0));

  auto multi = identity_bank({{0, 0}, {10, 0}});
  CHECK(ood::maha_score({10, 0}, multi) == doctest::Approx(0.0));  // nearest class wins
  CHECK(ood::maha_score({6, 0}, multi) == doctest::Approx(-16.0));
}

TEST_CASE("mahalanobis matches a dense-solve oracle") {
  Rng rng(3);
  const int d = 5, k = 3, per = 40;
  std::vector<double> lat;
  std::vector<int> labels;
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < per; ++i) {
      for (int j = 0; j < d; ++j) lat.push_back(rng.normal() + 3.0 * c);
      labels.push_back(c);
    }
  auto bank = ood::fit_gaussian_bank(lat, d, labels, k);

  Eigen::Map<Mat> cov(bank.cov.data(), d, d);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd z(d);
    for (int j = 0; j < d; ++j) z(j) = rng.uniform(-4.0, 8.0);
    double best = 1e300;
    for (int c = 0; c < k; ++c) {
      Eigen::Map<Eigen::VectorXd> mu(bank.means.data() + static_cast<std::size_t>(c) * d, d);
      Eigen::VectorXd diff = z - mu;
      best = std::min(best, diff.dot(cov.fullPivLu().solve(diff)));
    }
    std::vector<double> zv(z.data(), z.data() + d);
    CHECK(ood::maha_score(zv, bank) == doctest::Approx(-best).epsilon(1e-8));
  }
}

TEST_CASE("mahalanobis with identity covariance is negative squared euclidean") {
  Rng rng(4);
  auto bank = identity_bank({{1, 2, 3}, {-1, 0, 1}});
  for (int t = 0; t < 20; ++t) {
    std::vector<double> z = {rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0),
                             rng.uniform(-5.0, 5.0)};
    double best = 1e300;
    for (int c = 0; c < 2; ++c) {
      double q = 0;
      for (int j = 0; j < 3; ++j) {
        const double diff = z[static_cast<std::size_t>(j)] -
                            bank.means[static_cast<std::size_t>(c) * 3 + j];
        q += diff * diff;
      }
      best = std::min(best, q);
    }
    CHECK(std::abs(ood::maha_score(z, bank) + best) < 1e-8);
  }
}

TEST_CASE("mahalanobis affine invariance") {
  Rng rng(5);
  const int d = 6, k = 2, per = 50;
  std::vector<double> lat;
  std::vector<int> labels;
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < per; ++i) {
      for (int j = 0; j < d; ++j) lat.push_back(rng.normal() + 2.0 * c);
      labels.push_back(c);
    }
  auto bank = ood::fit_gaussian_bank(lat, d, labels, k);

  for (int t = 0; t < 20; ++t) {
    // well-conditioned random map: unit diagonal plus a small random part
    Mat A = Mat::Zero(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) A(i, j) = rng.uniform(-0.1, 0.1) + (i == j ? 1.0 : 0.0);
    std::vector<double> mapped(lat.size());
    Eigen::Map<const Mat> X(lat.data(), k * per, d);
    Eigen::Map<Mat>(mapped.data(), k * per, d) = X * A.transpose();
    auto bank2 = ood::fit_gaussian_bank(mapped, d, labels, k);

    for (int q = 0; q < 5; ++q) {
      // data-like queries, the regime scores are consumed in
      const double c0 = 2.0 * static_cast<double>(rng.below(2));
      Eigen::VectorXd z(d);
      for (int j = 0; j < d; ++j) z(j) = rng.normal() + c0;
      std::vector<double> zv(z.data(), z.data() + d);
      Eigen::VectorXd az = A * z;
      std::vector<double> azv(az.data(), az.data() + d);
      CHECK(std::abs(ood::maha_score(zv, bank) - ood::maha_score(azv, bank2)) < 1e-5);
    }
  }
}

TEST_CASE("msp score") {
  CHECK(ood::msp_score({0, 0}) == doctest::Approx(0.5));
  CHECK(ood::msp_score({10, 0}) == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))));
  Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> logits(4), shifted(4);
    for (int i = 0; i < 4; ++i) shifted[static_cast<std::size_t>(i)] =
        (logits[static_cast<std::size_t>(i)] = rng.uniform(-5.0, 5.0)) + 7.0;
    CHECK(ood::msp_score(logits) == doctest::Approx(ood::msp_score(shifted)).epsilon(1e-12));
    const double s = ood::msp_score(logits);
    CHECK(s > 0.25);  // > 1/K
    CHECK(s <= 1.0);
  }
  CHECK_THROWS_AS(ood::msp_score({1.0}), ScoreError);
}

TEST_CASE("energy score") {
  CHECK(ood::energy_score({1, 1}) == doctest::Approx(1.0 + std::log(2.0)));
  CHECK(ood::energy_score({100, 0}) == doctest::Approx(100.0).epsilon(1e-10));
  CHECK(std::isfinite(ood::energy_score({10000, 0})));
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> logits(4), shifted(4);
    const double c = rng.uniform(-50.0, 50.0);
    for (int i = 0; i < 4; ++i) shifted[static_cast<std::size_t>(i)] =
        (logits[static_cast<std::size_t>(i)] = rng.uniform(-5.0, 5.0)) + c;
    CHECK(ood::energy_score(shifted) ==
          doctest::Approx(ood::energy_score(logits) + c).epsilon(1e-9));
  }
}

TEST_CASE("validation bank and cosine score") {
  std::vector<double> lat = {1, 0, 0, 3, 0, 0, 0, 0, 2};
  auto bank = ood::build_validation_bank(lat, 3);
  REQUIRE(bank.count == 3);
  for (int r = 0; r < bank.count; ++r) {
    double norm = 0;
    for (int d = 0; d < 3; ++d) {
      const double v = bank.rows[static_cast<std::size_t>(r) * 3 + d];
      norm += v * v;
    }
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(ood::cosine_score({5, 0, 0}, bank) == doctest::Approx(1.0));   // parallel to a row
  CHECK(ood::cosine_score({0, 1, 0}, bank) == doctest::Approx(0.0));   // orthogonal to all
  CHECK_THROWS_AS(ood::cosine_score({0, 0, 0}, bank), ScoreError);
  CHECK_THROWS_AS(ood::build_validation_bank({0.0, 0.0}, 2), ScoreError);
}

TEST_CASE("cosine matches a brute-force loop") {
  Rng rng(8);
  const int d = 4, v = 50;
  auto lat = random_latents(v, d, rng);
  auto bank = ood::build_validation_bank(lat, d);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> z(d);
    for (auto& x : z) x = rng.uniform(-2.0, 2.0);
    double zn = 0;
    for (double x : z) zn += x * x;
    zn = std::sqrt(zn);
    double best = -1;
    for (int r = 0; r < v; ++r) {
      double dot = 0, rn = 0;
      for (int j = 0; j < d; ++j) {
        dot += lat[static_cast<std::size_t>(r) * d + j] * z[static_cast<std::size_t>(j)];
        rn += lat[static_cast<std::size_t>(r) * d + j] * lat[static_cast<std::size_t>(r) * d + j];
      }
      best = std::max(best, dot / (zn * std::sqrt(rn)));
    }
    CHECK(ood::cosine_score(z, bank) == doctest::Approx(best).epsilon(1e-10));
    // positive rescaling of the query changes nothing
    std::vector<double> scaled = z;
    for (auto& x : scaled) x *= 37.5;
    CHECK(ood::cosine_score(scaled, bank) ==
          doctest::Approx(ood::cosine_score(z, bank)).epsilon(1e-12));
  }
}

TEST_CASE("validation bank subsampling is capped and seeded") {
  Rng rng(9);
  auto lat = random_latents(500, 3, rng);
  auto a = ood::build_validation_bank(lat, 3, 100, 42);
  auto b = ood::build_validation_bank(lat, 3, 100, 42);
  auto c = ood::build_validation_bank(lat, 3, 100, 43);
  CHECK(a.count == 100);
  CHECK(a.rows == b.rows);
  CHECK(a.rows != c.rows);
}

TEST_CASE("orientation: ID scores exceed OOD scores on separated data") {
  Rng rng(10);
  const int d = 4, per = 60;
  std::vector<double> id_lat, ood_lat;
  std::vector<int> labels;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < per; ++i) {
      for (int j = 0; j < d; ++j)
        id_lat.push_back(0.3 * rng.normal() + (j == 0 ? 4.0 * c : 1.0));
      labels.push_back(c);
    }
  for (int i = 0; i < per; ++i)
    for (int j = 0; j < d; ++j) ood_lat.push_back(0.3 * rng.normal() - 6.0);

  auto bank = ood::fit_gaussian_bank(id_lat, d, labels, 2);
  auto vbank = ood::build_validation_bank(id_lat, d);
  // classifier-like logits: margin toward the true class for ID, flat for OOD
  auto logits_for = [&](const double* z, bool is_id) {
    std::vector<double> l = {0.0, 0.0};
    if (is_id) l[z[0] > 2.0 ? 1 : 0] = 6.0 + z[1];
    return l;
  };
  double mean_id[4] = {0, 0, 0, 0}, mean_ood[4] = {0, 0, 0, 0};
  for (int i = 0; i < 2 * per; ++i) {
    const double* z = id_lat.data() + static_cast<std::size_t>(i) * d;
    std::vector<double> zv(z, z + d);
    mean_id[0] += ood::msp_score(logits_for(z, true));
    mean_id[1] += ood::energy_score(logits_for(z, true));
    mean_id[2] += ood::maha_score(zv, bank);
    mean_id[3] += ood::cosine_score(zv, vbank);
  }
  for (int i = 0; i < per; ++i) {
    const double* z = ood_lat.data() + static_cast<std::size_t>(i) * d;
    std::vector<double> zv(z, z + d);
    mean_ood[0] += ood::msp_score(logits_for(z, false));
    mean_ood[1] += ood::energy_score(logits_for(z, false));
    mean_ood[2] += ood::maha_score(zv, bank);
    mean_ood[3] += ood::cosine_score(zv, vbank);
  }
  for (int s = 0; s < 4; ++s) CHECK(mean_id[s] / (2 * per) > mean_ood[s] / per);
}
