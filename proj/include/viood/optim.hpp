#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "viood/tensor.hpp"

namespace viood::ad {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

// AdamW: Adam with bias correction and decoupled multiplicative weight decay.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<NamedParam<T>> params, T lr, T weight_decay = T(0), T beta1 = T(0.9),
        T beta2 = T(0.999), T eps = T(1e-8))
      : params_(std::move(params)),
        lr_(lr),
        weight_decay_(weight_decay),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].tensor.numel(), T(0));
      v_[i].assign(params_[i].tensor.numel(), T(0));
    }
  }

  void set_lr(T lr) { lr_ = lr; }
  T lr() const { return lr_; }
  long step_count() const { return step_; }
  const std::vector<NamedParam<T>>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  void step() {
    ++step_;
    const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1_), step_));
    const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2_), step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<T>& p = params_[i].tensor;
      if (!p.requires_grad() || p.grad().empty())
        throw ContractError("adamw: registered parameter '" + params_[i].name +
                            "' has no gradient buffer");
      auto& m = m_[i];
      auto& v = v_[i];
      const auto& g = p.grad();
      auto& w = p.value();
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * g[j] * g[j];
        const T mhat = m[j] / bc1;
        const T vhat = v[j] / bc2;
        w[j] = w[j] * (T(1) - lr_ * weight_decay_) - lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  std::vector<NamedParam<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  long step_ = 0;
  T lr_, weight_decay_, beta1_, beta2_, eps_;
};

}  // namespace viood::ad
