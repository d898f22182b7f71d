#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "fd_check.hpp"
#include "viood/vi_head.hpp"

using namespace viood;
using D = ad::Tensor<double>;
using TapeD = ad::Tape<double>;
using HeadD = vi::VIHead<double>;

namespace {

vi::VIHeadConfig head_cfg(int d_z = 4, int k = 2) {
  vi::VIHeadConfig cfg;
  cfg.d_z = d_z;
  cfg.decoder_hidden = 8;
  cfg.k_classes = k;
  return cfg;
}

std::map<std::string, D> named(HeadD& head) {
  std::vector<ad::NamedParam<double>> params;
  head.collect(params);
  std::map<std::string, D> out;
  for (auto& p : params) out.emplace(p.name, p.tensor);
  return out;
}

D random_stack_row(int b, int d, Rng& rng) {
  D t = D::zeros({b, d});
  for (auto& v : t.value()) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS_AS(head_cfg(0, 2).validate(), ContractError);
  CHECK_THROWS_AS(head_cfg(4, 1).validate(), ContractError);
}

TEST_CASE("combination weights live on the simplex") {
  Rng rng(1);
  HeadD head(head_cfg(), 3, 6, rng);
  auto w = head.combination_weights(nullptr);
  REQUIRE(w.shape() == ad::Shape{3});
  double acc = 0;
  for (double v : w.value()) {
    CHECK(v >= 0.0);
    acc += v;
  }
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
  // zero logits at init -> uniform
  for (double v : w.value()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("build_target") {
  Rng rng(2);
  HeadD head(head_cfg(), 2, 2, rng);
  std::vector<D> stack = {D::from({1, 2}, {1, 0}), D::from({1, 2}, {0, 1})};

  SUBCASE("equal logits average the layers") {
    auto t = head.build_target(stack, nullptr);
    CHECK(t.value()[0] == doctest::Approx(0.5));
    CHECK(t.value()[1] == doctest::Approx(0.5));
  }
  SUBCASE("saturated logits select one layer") {
    head.s_logits().value() = {20.0, -20.0};
    auto t = head.build_target(stack, nullptr);
    CHECK(std::abs(t.value()[0] - 1.0) < 1e-6);
    CHECK(std::abs(t.value()[1] - 0.0) < 1e-6);
  }
  SUBCASE("length mismatch throws") {
    stack.push_back(D::from({1, 2}, {1, 1}));
    CHECK_THROWS_AS(head.build_target(stack, nullptr), ShapeError);
  }
}

TEST_CASE("build_target matches a direct recomputation") {
  Rng rng(3);
  const int L = 4, d = 6, B = 3;
  HeadD head(head_cfg(4, 2), L, d, rng);
  for (auto& v : head.s_logits().value()) v = rng.uniform(-2.0, 2.0);
  std::vector<D> stack;
  for (int l = 0; l < L; ++l) stack.push_back(random_stack_row(B, d, rng));

  auto got = head.build_target(stack, nullptr);
  // independent softmax + weighted sum
  std::vector<double> w(L);
  double mx = head.s_logits().value()[0], z = 0;
  for (double v : head.s_logits().value()) mx = std::max(mx, v);
  for (int l = 0; l < L; ++l) z += w[l] = std::exp(head.s_logits().value()[l] - mx);
  for (auto& v : w) v /= z;
  for (std::size_t i = 0; i < got.numel(); ++i) {
    double want = 0;
    for (int l = 0; l < L; ++l) want += w[l] * stack[l].value()[i];
    CHECK(got.value()[i] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("posterior reparameterization") {
  Rng rng(4);
  const int d = 6;
  HeadD head(head_cfg(4, 2), 2, d, rng);
  auto h = random_stack_row(2, d, rng);

  SUBCASE("eps = 0 gives z = mu") {
    auto p = head.posterior(h, nullptr, head.sample_eps(2, nullptr));
    CHECK(p.z.value() == p.mu.value());
  }
  SUBCASE("log_var = 0, eps = 1 gives z = mu + 1") {
    auto params = named(head);
    std::fill(params.at("head.lv.W").value().begin(), params.at("head.lv.W").value().end(), 0.0);
    D eps = D::zeros({2, 4});
    std::fill(eps.value().begin(), eps.value().end(), 1.0);
    auto p = head.posterior(h, nullptr, eps);
    for (std::size_t i = 0; i < p.z.numel(); ++i)
      CHECK(p.z.value()[i] == doctest::Approx(p.mu.value()[i] + 1.0).epsilon(1e-12));
  }
  SUBCASE("eps shape is checked") {
    CHECK_THROWS_AS(head.posterior(h, nullptr, D::zeros({2, 5})), ShapeError);
  }
}

TEST_CASE("sampled z has the posterior mean") {
  Rng rng(5);
  const int d = 6, d_z = 4;
  HeadD head(head_cfg(d_z, 2), 2, d, rng);
  auto h = random_stack_row(1, d, rng);
  auto ref = head.posterior(h, nullptr, head.sample_eps(1, nullptr));

  const int n = 100000;
  std::vector<double> acc(d_z, 0.0);
  Rng noise(79);
  for (int t = 0; t < n; ++t) {
    auto p = head.posterior(h, nullptr, &noise);
    for (int i = 0; i < d_z; ++i) acc[static_cast<std::size_t>(i)] += p.z.value()[i];
  }
  for (int i = 0; i < d_z; ++i) {
    const double sigma = std::exp(0.5 * ref.log_var.value()[i]);
    const double tol = 3.0 * sigma / std::sqrt(static_cast<double>(n));
    CHECK(std::abs(acc[static_cast<std::size_t>(i)] / n - ref.mu.value()[i]) <= tol);
  }
}

TEST_CASE("closed-form KL") {
  CHECK(vi::kl_diag({0, 0, 0}, {0, 0, 0}) == doctest::Approx(0.0));
  CHECK(vi::kl_diag({1}, {0}) == doctest::Approx(0.5));

  SUBCASE("nonnegative on random posteriors") {
    Rng rng(6);
    for (int t = 0; t < 10000; ++t) {
      std::vector<double> mu(4), lv(4);
      for (auto& v : mu) v = rng.uniform(-3.0, 3.0);
      for (auto& v : lv) v = rng.uniform(-3.0, 3.0);
      CHECK(vi::kl_diag(mu, lv) >= -1e-6);
    }
  }
  SUBCASE("matches a Monte-Carlo estimate") {
    Rng rng(7);
    std::vector<double> mu(4), lv(4);
    for (auto& v : mu) v = rng.uniform(-1.0, 1.0);
    for (auto& v : lv) v = rng.uniform(-1.0, 1.0);
    const double exact = vi::kl_diag(mu, lv);
    double mc = 0;
    const int n = 1000000;
    for (int t = 0; t < n; ++t)
      for (int i = 0; i < 4; ++i) {
        const double e = rng.normal();
        const double z = mu[static_cast<std::size_t>(i)] +
                         std::exp(0.5 * lv[static_cast<std::size_t>(i)]) * e;
        // log q(z) - log p(z) for this coordinate
        mc += 0.5 * (z * z - e * e - lv[static_cast<std::size_t>(i)]);
      }
    mc /= n;
    CHECK(std::abs(mc - exact) <= 0.01 * std::abs(exact));
  }
}

TEST_CASE("annealing schedule") {
  CHECK(vi::anneal_beta(0, 100, 0.5) == doctest::Approx(0.0));
  CHECK(vi::anneal_beta(25, 100, 0.5) == doctest::Approx(0.5));
  CHECK(vi::anneal_beta(50, 100, 0.5) == doctest::Approx(1.0));
  CHECK(vi::anneal_beta(99, 100, 0.5) == doctest::Approx(1.0));
  CHECK(vi::anneal_beta(0, 100, 0.0) == doctest::Approx(1.0));  // no annealing
  double prev = -1;
  for (long s = 0; s <= 100; ++s) {
    const double b = vi::anneal_beta(s, 100, 0.5);
    CHECK(b >= prev);
    CHECK(b >= 0.0);
    CHECK(b <= 1.0);
    prev = b;
  }
}

TEST_CASE("vi_loss composition") {
  Rng rng(8);
  const int L = 2, d = 6, B = 3;
  HeadD head(head_cfg(4, 2), L, d, rng);
  std::vector<D> stack = {random_stack_row(B, d, rng), random_stack_row(B, d, rng)};
  std::vector<int> labels = {0, 1, 0};
  auto eps = head.sample_eps(B, nullptr);

  SUBCASE("step 0 means beta 0 and total == ce") {
    vi::LossBreakdown<double> bd;
    auto total = head.vi_loss(stack, labels, 0, 100, nullptr, eps, &bd);
    CHECK(bd.beta == 0.0);
    CHECK(total.item() == bd.ce);
  }
  SUBCASE("past the horizon beta is 1") {
    vi::LossBreakdown<double> bd;
    head.vi_loss(stack, labels, 90, 100, nullptr, eps, &bd);
    CHECK(bd.beta == 1.0);
  }
  SUBCASE("breakdown recombines bit-exactly") {
    vi::LossBreakdown<double> bd;
    auto total = head.vi_loss(stack, labels, 30, 100, nullptr, eps, &bd);
    CHECK(total.item() == bd.ce + bd.beta * (bd.recon + bd.kl));
    CHECK(bd.kl >= -1e-6);
  }
  SUBCASE("label range is enforced") {
    CHECK_THROWS_AS(head.vi_loss(stack, {0, 2, 0}, 0, 100, nullptr, eps), ContractError);
    CHECK_THROWS_AS(head.vi_loss(stack, {0, -1, 0}, 0, 100, nullptr, eps), ContractError);
  }
}

TEST_CASE("beta 0 leaves decoder and s untouched") {
  Rng rng(9);
  const int L = 3, d = 6, B = 2;
  HeadD head(head_cfg(4, 2), L, d, rng);
  std::vector<D> stack;
  for (int l = 0; l < L; ++l) {
    stack.push_back(random_stack_row(B, d, rng));
    stack.back().enable_grad();
  }
  TapeD tape;
  auto total = head.vi_loss(stack, {0, 1}, 0, 100, &tape, head.sample_eps(B, nullptr));
  tape.backward(total);
  auto params = named(head);
  for (const auto& name : {"head.s_logits", "head.dec1.W", "head.dec1.b", "head.dec2.W",
                           "head.dec2.b"})
    for (double g : params.at(name).grad()) CHECK(g == 0.0);
  // the classifier path still learns
  double cls_norm = 0;
  for (double g : params.at("head.cls.W").grad()) cls_norm += g * g;
  CHECK(cls_norm > 0.0);
}

TEST_CASE("full loss passes finite differences") {
  Rng rng(10);
  const int L = 2, d = 6, B = 2;
  HeadD head(head_cfg(3, 2), L, d, rng);
  std::vector<D> stack;
  for (int l = 0; l < L; ++l) {
    stack.push_back(random_stack_row(B, d, rng));
    stack.back().enable_grad();
  }
  std::vector<int> labels = {0, 1};
  auto eps = head.sample_eps(B, &rng);

  auto f = [&](std::vector<fd::D>&, fd::TapeD* tape) {
    return head.vi_loss(stack, labels, 30, 100, tape, eps);
  };
  std::vector<fd::D> leaves = stack;
  for (auto& [name, t] : named(head)) leaves.push_back(t);
  fd::Failure why;
  const int bad = fd::check_grad(f, leaves, 1e-3, 1e-5, &why, "vi_loss");
  INFO(why.where << " got " << why.got << " want " << why.want);
  CHECK(bad == 0);
}

TEST_CASE("decoder and classifier basics") {
  Rng rng(11);
  HeadD head(head_cfg(4, 3), 2, 6, rng);
  auto h = random_stack_row(2, 6, rng);
  auto p = head.posterior(h, nullptr, head.sample_eps(2, nullptr));

  auto x1 = head.decode(p.z, nullptr);
  auto x2 = head.decode(p.z, nullptr);
  CHECK(x1.shape() == ad::Shape{2, 6});
  CHECK(x1.value() == x2.value());

  auto params = named(head);
  std::fill(params.at("head.cls.W").value().begin(), params.at("head.cls.W").value().end(), 0.0);
  auto logits = head.classify(p.z, nullptr);
  CHECK(logits.shape() == ad::Shape{2, 3});
  auto sm = ad::softmax(logits, static_cast<TapeD*>(nullptr));
  for (double v : sm.value()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("baseline head") {
  Rng rng(12);
  const int d = 6, B = 2;
  vi::BaselineHead<double> base(d, 2, rng);
  std::vector<D> stack = {random_stack_row(B, d, rng)};

  SUBCASE("uniform logits cost ln K") {
    std::vector<ad::NamedParam<double>> ps;
    base.collect(ps);
    for (auto& p : ps) std::fill(p.tensor.value().begin(), p.tensor.value().end(), 0.0);
    auto loss = base.loss(stack, {0, 1}, nullptr);
    CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("loss decreases as the true logit grows") {
    std::vector<ad::NamedParam<double>> ps;
    base.collect(ps);
    for (auto& p : ps) std::fill(p.tensor.value().begin(), p.tensor.value().end(), 0.0);
    double prev = base.loss(stack, {0, 0}, nullptr).item();
    for (double m : {5.0, 10.0, 20.0}) {
      // bias trick: push class-0 bias to m
      ps[0].tensor.value();  // W stays 0
      ps[1].tensor.value()[0] = m;
      const double cur = base.loss(stack, {0, 0}, nullptr).item();
      CHECK(cur < prev);
      prev = cur;
    }
    CHECK(prev < 1e-8);
  }
  SUBCASE("label range enforced") {
    CHECK_THROWS_AS(base.loss(stack, {0, 5}, nullptr), ContractError);
  }
}

TEST_CASE("baseline matches the vi ce term under shared weights") {
  Rng rng(13);
  const int d = 5, B = 3;
  // d_z == d_model and an identity mu map make z equal the hidden state
  HeadD head(head_cfg(d, 2), 2, d, rng);
  auto params = named(head);
  auto& muW = params.at("head.mu.W").value();
  std::fill(muW.begin(), muW.end(), 0.0);
  for (int i = 0; i < d; ++i) muW[static_cast<std::size_t>(i) * d + i] = 1.0;

  vi::BaselineHead<double> base(d, 2, rng);
  std::vector<ad::NamedParam<double>> bp;
  base.collect(bp);
  bp[0].tensor.value() = params.at("head.cls.W").value();
  bp[1].tensor.value() = params.at("head.cls.b").value();

  std::vector<D> stack = {random_stack_row(B, d, rng), random_stack_row(B, d, rng)};
  std::vector<int> labels = {1, 0, 1};
  vi::LossBreakdown<double> bd;
  head.vi_loss(stack, labels, 0, 100, nullptr, head.sample_eps(B, nullptr), &bd);
  auto ref = base.loss(stack, labels, nullptr);
  CHECK(bd.ce == ref.item());
}
