#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "viood/encoder.hpp"

namespace viood::vi {

using ad::NamedParam;
using ad::Tape;
using ad::Tensor;
using nn::Linear;

struct VIHeadConfig {
  int d_z = 32;
  int decoder_hidden = 128;
  int k_classes = 0;  // filled in from the dataset
  double anneal_fraction = 0.5;

  void validate() const {
    if (d_z < 1) throw ContractError("vi head: d_z must be >= 1");
    if (k_classes < 2) throw ContractError("vi head: need at least 2 classes");
    if (anneal_fraction < 0.0) throw ContractError("vi head: anneal_fraction must be >= 0");
  }
};

template <typename T>
struct LossBreakdown {
  T total = T(0);
  T ce = T(0);
  T recon = T(0);
  T kl = T(0);
  double beta = 0.0;
};

template <typename T>
struct Posterior {
  Tensor<T> mu;       // [B, d_z]
  Tensor<T> log_var;  // [B, d_z]
  Tensor<T> z;        // [B, d_z], one reparameterized sample
};

// Linear KL annealing weight: 0 at step 0, 1 from the horizon onward.
inline double anneal_beta(long step, long total_steps, double anneal_fraction) {
  const double horizon = anneal_fraction * static_cast<double>(total_steps);
  if (horizon <= 0.0) return 1.0;
  return std::min(1.0, static_cast<double>(step) / horizon);
}

// Closed-form KL(q || N(0, I)) for one diagonal posterior.
inline double kl_diag(const std::vector<double>& mu, const std::vector<double>& log_var) {
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i)
    s += mu[i] * mu[i] + std::exp(log_var[i]) - 1.0 - log_var[i];
  return 0.5 * s;
}

// Posterior q(z|x), prior N(0,I), decoder p(x^target|z), classifier p(y|z)
// and the learnable layer-combination vector.
template <typename T>
class VIHead {
 public:
  VIHead() = default;

  VIHead(const VIHeadConfig& cfg, int layers, int d_model, Rng& rng)
      : cfg_(cfg), layers_(layers) {
    cfg.validate();
    s_logits_ = Tensor<T>::zeros({layers}, true);  // uniform combination at init
    mu_map_.init(d_model, cfg.d_z, rng);
    lv_map_.init(d_model, cfg.d_z, rng);  // zero bias: sigma starts at 1
    dec1_.init(cfg.d_z, cfg.decoder_hidden, rng);
    dec2_.init(cfg.decoder_hidden, d_model, rng);
    cls_.init(cfg.d_z, cfg.k_classes, rng);
  }

  const VIHeadConfig& config() const { return cfg_; }
  int layers() const { return layers_; }
  Tensor<T>& s_logits() { return s_logits_; }
  const Tensor<T>& s_logits() const { return s_logits_; }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix = "head") {
    out.push_back({prefix + ".s_logits", s_logits_});
    mu_map_.collect(out, prefix + ".mu");
    lv_map_.collect(out, prefix + ".lv");
    dec1_.collect(out, prefix + ".dec1");
    dec2_.collect(out, prefix + ".dec2");
    cls_.collect(out, prefix + ".cls");
  }

  Tensor<T> combination_weights(Tape<T>* tape) const { return ad::softmax(s_logits_, tape); }

  // x^target = sum_l s_l * h_CLS^l, s = softmax(raw logits).
  Tensor<T> build_target(const std::vector<Tensor<T>>& stack, Tape<T>* tape) const {
    if (static_cast<int>(stack.size()) != layers_)
      throw ShapeError("build_target: stack has " + std::to_string(stack.size()) +
                       " rows, combination vector has " + std::to_string(layers_));
    return ad::weighted_sum(stack, combination_weights(tape), tape);
  }

  // Standard-normal noise for the reparameterized sample; zeros (z = mu)
  // when rng is null, which is the deterministic-inference mode.
  Tensor<T> sample_eps(int batch, Rng* rng) const {
    Tensor<T> eps = Tensor<T>::zeros({batch, cfg_.d_z});
    if (rng)
      for (auto& e : eps.value()) e = static_cast<T>(rng->normal());
    return eps;
  }

  // One reparameterized sample per input: z = mu + sigma * eps.
  Posterior<T> posterior(const Tensor<T>& last_hidden, Tape<T>* tape,
                         const Tensor<T>& eps) const {
    Posterior<T> p;
    p.mu = mu_map_.forward(last_hidden, tape);
    p.log_var = lv_map_.forward(last_hidden, tape);
    if (eps.shape() != p.mu.shape())
      throw ShapeError("posterior: eps shape " + ad::shape_str(eps.shape()) +
                       " does not match mu " + ad::shape_str(p.mu.shape()));
    Tensor<T> sigma = ad::exp_op(ad::scale(p.log_var, T(0.5), tape), tape);
    p.z = ad::add(p.mu, ad::mul(sigma, eps, tape), tape);
    return p;
  }

  Posterior<T> posterior(const Tensor<T>& last_hidden, Tape<T>* tape, Rng* noise) const {
    return posterior(last_hidden, tape, sample_eps(last_hidden.shape()[0], noise));
  }

  // Batch-mean KL(q(z|x) || N(0,I)), as a taped scalar.
  Tensor<T> kl_term(const Posterior<T>& p, Tape<T>* tape) const {
    const int batch = p.mu.shape()[0];
    Tensor<T> terms = ad::add(ad::add(ad::mul(p.mu, p.mu, tape), ad::exp_op(p.log_var, tape), tape),
                              ad::affine(p.log_var, T(-1), T(-1), tape), tape);
    return ad::scale(ad::sum(terms, tape), static_cast<T>(0.5 / batch), tape);
  }

  Tensor<T> decode(const Tensor<T>& z, Tape<T>* tape) const {
    return dec2_.forward(ad::gelu(dec1_.forward(z, tape), tape), tape);
  }

  Tensor<T> classify(const Tensor<T>& z, Tape<T>* tape) const { return cls_.forward(z, tape); }

  // Negative ELBO on one batch. Returns the taped total plus the breakdown.
  Tensor<T> vi_loss(const std::vector<Tensor<T>>& stack, const std::vector<int>& labels,
                    long step, long total_steps, Tape<T>* tape, const Tensor<T>& eps,
                    LossBreakdown<T>* breakdown = nullptr,
                    Posterior<T>* posterior_out = nullptr) const {
    for (int y : labels)
      if (y < 0 || y >= cfg_.k_classes)
        throw ContractError("vi_loss: label " + std::to_string(y) + " out of range [0," +
                            std::to_string(cfg_.k_classes) + ")");
    const double beta = anneal_beta(step, total_steps, cfg_.anneal_fraction);
    Posterior<T> p = posterior(stack.back(), tape, eps);
    Tensor<T> logits = classify(p.z, tape);
    Tensor<T> ce = ad::cross_entropy(logits, labels, tape);
    Tensor<T> target = build_target(stack, tape);
    // Unit-variance Gaussian likelihood: squared error summed over features,
    // averaged over the batch (same reduction as ce and kl). ad::mse averages
    // over every element, so rescale by the feature count.
    Tensor<T> recon = ad::scale(ad::mse(decode(p.z, tape), target, tape),
                                static_cast<T>(target.shape()[1]), tape);
    Tensor<T> kl = kl_term(p, tape);
    Tensor<T> total =
        ad::add(ce, ad::scale(ad::add(recon, kl, tape), static_cast<T>(beta), tape), tape);
    if (breakdown) {
      breakdown->total = total.item();
      breakdown->ce = ce.item();
      breakdown->recon = recon.item();
      breakdown->kl = kl.item();
      breakdown->beta = beta;
    }
    if (posterior_out) *posterior_out = p;
    return total;
  }

 private:
  VIHeadConfig cfg_;
  int layers_ = 0;
  Tensor<T> s_logits_;
  Linear<T> mu_map_, lv_map_;  // two separate affine maps
  Linear<T> dec1_, dec2_;
  Linear<T> cls_;
};

// Plain cross-entropy head on h_CLS^{L-1}: the discriminative baseline.
template <typename T>
class BaselineHead {
 public:
  BaselineHead() = default;

  BaselineHead(int d_model, int k_classes, Rng& rng) : k_classes_(k_classes) {
    if (k_classes < 2) throw ContractError("baseline head: need at least 2 classes");
    cls_.init(d_model, k_classes, rng);
  }

  int k_classes() const { return k_classes_; }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix = "base") {
    cls_.collect(out, prefix + ".cls");
  }

  Tensor<T> classify(const Tensor<T>& last_hidden, Tape<T>* tape) const {
    return cls_.forward(last_hidden, tape);
  }

  Tensor<T> loss(const std::vector<Tensor<T>>& stack, const std::vector<int>& labels,
                 Tape<T>* tape) const {
    for (int y : labels)
      if (y < 0 || y >= k_classes_)
        throw ContractError("baseline loss: label " + std::to_string(y) + " out of range [0," +
                            std::to_string(k_classes_) + ")");
    return ad::cross_entropy(classify(stack.back(), tape), labels, tape);
  }

 private:
  int k_classes_ = 0;
  Linear<T> cls_;
};

}  // namespace viood::vi
