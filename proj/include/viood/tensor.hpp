#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "viood/error.hpp"

namespace viood::ad {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename T>
struct TensorData {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated iff requires_grad
  bool requires_grad = false;
};

// Shared handle over a dense float buffer with an optional gradient buffer.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.p_ = std::make_shared<TensorData<T>>();
    t.p_->shape = std::move(shape);
    t.p_->value.assign(shape_numel(t.p_->shape), T(0));
    t.p_->requires_grad = requires_grad;
    if (requires_grad) t.p_->grad.assign(t.p_->value.size(), T(0));
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> value, bool requires_grad = false) {
    if (shape_numel(shape) != value.size())
      throw ShapeError("tensor data length " + std::to_string(value.size()) +
                       " does not match shape " + shape_str(shape));
    Tensor t;
    t.p_ = std::make_shared<TensorData<T>>();
    t.p_->shape = std::move(shape);
    t.p_->value = std::move(value);
    t.p_->requires_grad = requires_grad;
    if (requires_grad) t.p_->grad.assign(t.p_->value.size(), T(0));
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return p_ != nullptr; }
  const Shape& shape() const { return p_->shape; }
  std::size_t numel() const { return p_->value.size(); }
  int ndim() const { return static_cast<int>(p_->shape.size()); }
  bool requires_grad() const { return p_->requires_grad; }

  std::vector<T>& value() { return p_->value; }
  const std::vector<T>& value() const { return p_->value; }
  std::vector<T>& grad() { return p_->grad; }
  const std::vector<T>& grad() const { return p_->grad; }

  T item() const {
    if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return p_->value[0];
  }

  void zero_grad() {
    if (p_->requires_grad) std::fill(p_->grad.begin(), p_->grad.end(), T(0));
  }

  // Promotes a leaf to a gradient holder (used by op outputs).
  void enable_grad() {
    if (!p_->requires_grad) {
      p_->requires_grad = true;
      p_->grad.assign(p_->value.size(), T(0));
    }
  }

  bool all_finite() const {
    for (T v : p_->value)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_buffer(const Tensor& o) const { return p_ == o.p_; }

 private:
  std::shared_ptr<TensorData<T>> p_;
};

// Records taped ops in execution order; backward replays them in reverse.
// One tape must never be driven from two threads.
template <typename T>
class Tape {
 public:
  void record(const Tensor<T>& output, std::function<void()> backward_fn) {
    outputs_.push_back(output);
    ops_.push_back(std::move(backward_fn));
  }

  std::size_t size() const { return ops_.size(); }

  void backward(Tensor<T>& loss) {
    if (loss.numel() != 1)
      throw ContractError("backward() requires a scalar loss, got shape " +
                          shape_str(loss.shape()));
    if (!loss.requires_grad())
      throw ContractError("backward() on a tensor with no gradient path");
    // Intermediate grads are scratch space; leaf grads accumulate across calls.
    for (auto& o : outputs_) o.zero_grad();
    loss.grad()[0] += T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void clear() {
    ops_.clear();
    outputs_.clear();
  }

 private:
  std::vector<std::function<void()>> ops_;
  std::vector<Tensor<T>> outputs_;
};

}  // namespace viood::ad
