#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "viood/tensor.hpp"

namespace viood::ad {

// Runtime toggle for per-op input finiteness checks.
inline bool g_check_numerics = true;

namespace detail {

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using CMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
inline void check_finite(const char* op, const Tensor<T>& t) {
  if (g_check_numerics && !t.all_finite())
    throw NumericError(std::string(op) + ": non-finite input");
}

template <typename T>
inline bool wants_grad(const Tape<T>* tape, const Tensor<T>& a) {
  return tape != nullptr && a.requires_grad();
}

inline std::size_t leading_numel(const Shape& s, int upto) {
  std::size_t n = 1;
  for (int i = 0; i < upto; ++i) n *= static_cast<std::size_t>(s[i]);
  return n;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul: A[..., M, K] x B[K, N]  or  A[..., M, K] x B[..., K, N] (same batch)
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  detail::check_finite("matmul", a);
  detail::check_finite("matmul", b);
  if (a.ndim() < 2 || b.ndim() < 2)
    throw ShapeError("matmul: need >=2-d operands, got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const int M = sa[sa.size() - 2], K = sa[sa.size() - 1];
  const bool batched_b = b.ndim() > 2;
  if (batched_b) {
    if (sb.size() != sa.size() ||
        !std::equal(sa.begin(), sa.end() - 2, sb.begin()))
      throw ShapeError("matmul: batch dims mismatch " + shape_str(sa) + " x " + shape_str(sb));
  }
  const int Kb = sb[sb.size() - 2], N = sb[sb.size() - 1];
  if (K != Kb)
    throw ShapeError("matmul: inner dims mismatch " + shape_str(sa) + " x " + shape_str(sb));

  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(N);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  const std::size_t batch = detail::leading_numel(sa, a.ndim() - 2);

  if (!batched_b) {
    detail::CMatMap<T> A(a.value().data(), static_cast<Eigen::Index>(batch * M), K);
    detail::CMatMap<T> B(b.value().data(), K, N);
    detail::MatMap<T> C(out.value().data(), static_cast<Eigen::Index>(batch * M), N);
    C.noalias() = A * B;
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      detail::CMatMap<T> A(a.value().data() + i * M * K, M, K);
      detail::CMatMap<T> B(b.value().data() + i * K * N, K, N);
      detail::MatMap<T> C(out.value().data() + i * M * N, M, N);
      C.noalias() = A * B;
    }
  }

  if (tape && (a.requires_grad() || b.requires_grad())) {
    out.enable_grad();
    Tensor<T> ac = a, bc = b, oc = out;
    tape->record(out, [ac, bc, oc, M, K, N, batch, batched_b]() mutable {
      if (ac.requires_grad()) {
        if (!batched_b) {
          detail::CMatMap<T> dC(oc.grad().data(), static_cast<Eigen::Index>(batch * M), N);
          detail::CMatMap<T> B(bc.value().data(), K, N);
          detail::MatMap<T> dA(ac.grad().data(), static_cast<Eigen::Index>(batch * M), K);
          dA.noalias() += dC * B.transpose();
        } else {
          for (std::size_t i = 0; i < batch; ++i) {
            detail::CMatMap<T> dC(oc.grad().data() + i * M * N, M, N);
            detail::CMatMap<T> B(bc.value().data() + i * K * N, K, N);
            detail::MatMap<T> dA(ac.grad().data() + i * M * K, M, K);
            dA.noalias() += dC * B.transpose();
          }
        }
      }
      if (bc.requires_grad()) {
        if (!batched_b) {
          detail::CMatMap<T> dC(oc.grad().data(), static_cast<Eigen::Index>(batch * M), N);
          detail::CMatMap<T> A(ac.value().data(), static_cast<Eigen::Index>(batch * M), K);
          detail::MatMap<T> dB(bc.grad().data(), K, N);
          dB.noalias() += A.transpose() * dC;
        } else {
          for (std::size_t i = 0; i < batch; ++i) {
            detail::CMatMap<T> dC(oc.grad().data() + i * M * N, M, N);
            detail::CMatMap<T> A(ac.value().data() + i * M * K, M, K);
            detail::MatMap<T> dB(bc.grad().data() + i * K * N, K, N);
            dB.noalias() += A.transpose() * dC;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// transpose of two dims (strided copy)
// ---------------------------------------------------------------------------
namespace detail {
inline std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * static_cast<std::size_t>(s[i + 1]);
  return st;
}

// Walks output elements in order, yielding the matching input offset for the
// in-shape with dims d0,d1 swapped.
template <typename T, typename Fn>
void transpose_walk(const Shape& in_shape, int d0, int d1, Fn&& fn) {
  Shape out_shape = in_shape;
  std::swap(out_shape[d0], out_shape[d1]);
  const auto in_st = strides_of(in_shape);
  const auto out_st = strides_of(out_shape);
  const std::size_t n = shape_numel(in_shape);
  const int nd = static_cast<int>(in_shape.size());
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t rem = o, in_off = 0;
    for (int d = 0; d < nd; ++d) {
      const int v = static_cast<int>(rem / out_st[d]);
      rem %= out_st[d];
      int src_d = d;
      if (d == d0)
        src_d = d1;
      else if (d == d1)
        src_d = d0;
      in_off += static_cast<std::size_t>(v) * in_st[src_d];
    }
    fn(o, in_off);
  }
}
}  // namespace detail

template <typename T>
Tensor<T> transpose(const Tensor<T>& a, int d0, int d1, Tape<T>* tape) {
  detail::check_finite("transpose", a);
  if (d0 < 0 || d1 < 0 || d0 >= a.ndim() || d1 >= a.ndim())
    throw ShapeError("transpose: dims out of range for " + shape_str(a.shape()));
  Shape out_shape = a.shape();
  std::swap(out_shape[d0], out_shape[d1]);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  detail::transpose_walk<T>(a.shape(), d0, d1, [&](std::size_t o, std::size_t in_off) {
    out.value()[o] = a.value()[in_off];
  });
  if (detail::wants_grad(tape, a)) {
    out.enable_grad();
    Tensor<T> ac = a, oc = out;
    Shape in_shape = a.shape();
    tape->record(out, [ac, oc, in_shape, d0, d1]() mutable {
      detail::transpose_walk<T>(in_shape, d0, d1, [&](std::size_t o, std::size_t in_off) {
        ac.grad()[in_off] += oc.grad()[o];
      });
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape, Tape<T>* tape) {
  if (shape_numel(new_shape) != a.numel())
    throw ShapeError("reshape: numel mismatch " + shape_str(a.shape()) + " -> " +
                     shape_str(new_shape));
  Tensor<T> out = Tensor<T>::from(std::move(new_shape), a.value());
  if (detail::wants_grad(tape, a)) {
    out.enable_grad();
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc]() mutable {
      for (std::size_t i = 0; i < ac.numel(); ++i) ac.grad()[i] += oc.grad()[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

// add: same shape, or b is a bias over the last dim of a
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  detail::check_finite("add", a);
  detail::check_finite("add", b);
  const bool bias = (b.ndim() == 1 && a.ndim() >= 1 && a.shape().back() == b.shape()[0] &&
                     a.shape() != b.shape());
  if (!bias && a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const std::size_t n = a.numel();
  if (!bias) {
    for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] + b.value()[i];
  } else {
    const std::size_t d = b.numel();
    for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] + b.value()[i % d];
  }
  if (tape && (a.requires_grad() || b.requires_grad())) {
    out.enable_grad();
    Tensor<T> ac = a, bc = b, oc = out;
    tape->record(out, [ac, bc, oc, bias]() mutable {
      const std::size_t n = oc.numel();
      if (ac.requires_grad())
        for (std::size_t i = 0; i < n; ++i) ac.grad()[i] += oc.grad()[i];
      if (bc.requires_grad()) {
        if (!bias) {
          for (std::size_t i = 0; i < n; ++i) bc.grad()[i] += oc.grad()[i];
        } else {
          const std::size_t d = bc.numel();
          for (std::size_t i = 0; i < n; ++i) bc.grad()[i % d] += oc.grad()[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  detail::check_finite("mul", a);
  detail::check_finite("mul", b);
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.value()[i] = a.value()[i] * b.value()[i];
  if (tape && (a.requires_grad() || b.requires_grad())) {
    out.enable_grad();
    Tensor<T> ac = a, bc = b, oc = out;
    tape->record(out, [ac, bc, oc]() mutable {
      const std::size_t n = oc.numel();
      if (ac.requires_grad())
        for (std::size_t i = 0; i < n; ++i) ac.grad()[i] += oc.grad()[i] * bc.value()[i];
      if (bc.requires_grad())
        for (std::size_t i = 0; i < n; ++i) bc.grad()[i] += oc.grad()[i] * ac.value()[i];
    });
  }
  return out;
}

// alpha * a + beta, elementwise with scalar constants
template <typename T>
Tensor<T> affine(const Tensor<T>& a, T alpha, T beta, Tape<T>* tape) {
  detail::check_finite("affine", a);
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.value()[i] = alpha * a.value()[i] + beta;
  if (detail::wants_grad(tape, a)) {
    out.enable_grad();
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc, alpha]() mutable {
      for (std::size_t i = 0; i < ac.numel(); ++i) ac.grad()[i] += alpha * oc.grad()[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c, Tape<T>* tape) {
  return affine(a, c, T(0), tape);
}

template <typename T>
Tensor<T> exp_op(const Tensor<T>& a, Tape<T>* tape) {
  detail::check_finite("exp", a);
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.value()[i] = std::exp(a.value()[i]);
  if (detail::wants_grad(tape, a)) {
    out.enable_grad();
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc]() mutable {
      for (std::size_t i = 0; i < ac.numel(); ++i) ac.grad()[i] += oc.grad()[i] * oc.value()[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& a, Tape<T>* tape) {
  detail::check_finite("tanh", a);
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out.value()[i] = std::tanh(a.value()[i]);
  if (detail::wants_grad(tape, a)) {
    out.enable_grad();
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc]() mutable {
      for (std::size_t i = 0; i < ac.numel(); ++i) {
        const T y = oc.value()[i];
        ac.grad()[i] += oc.grad()[i] * (T(1) - y * y);
      }
    });
  }
  return out;
}

// tanh-approximation GELU
template <typename T>
Tensor<T> gelu(const Tensor<T>& a, Tape<T>* tape) {
  detail::check_finite("gelu", a);
  constexpr double kC = 0.7978845608028653558798921198687;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double x = static_cast<double>(a.value()[i]);
    const double u = kC * (x + kA * x * x * x);
    out.value()[i] = static_cast<T>(0.5 * x * (1.0 + std::tanh(u)));
  }
  if (detail::wants_grad(tape, a)) {
    out.enable_grad();
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc]() mutable {
      constexpr double kC = 0.7978845608028653558798921198687;
      constexpr double kA = 0.044715;
      for (std::size_t i = 0; i < ac.numel(); ++i) {
        const double x = static_cast<double>(ac.value()[i]);
        const double u = kC * (x + kA * x * x * x);
        const double th = std::tanh(u);
        const double du = kC * (1.0 + 3.0 * kA * x * x);
        const double d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
        ac.grad()[i] += oc.grad()[i] * static_cast<T>(d);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// row-wise ops over the last dim
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, Tape<T>* tape) {
  detail::check_finite("softmax", a);
  if (a.ndim() < 1) throw ShapeError("softmax: needs >=1-d input");
  const std::size_t d = static_cast<std::size_t>(a.shape().back());
  const std::size_t rows = a.numel() / d;
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a.value().data() + r * d;
    T* y = out.value().data() + r * d;
    T mx = x[0];
    for (std::size_t i = 1; i < d; ++i) mx = std::max(mx, x[i]);
    T s = T(0);
    for (std::size_t i = 0; i < d; ++i) {
      y[i] = std::exp(x[i] - mx);
      s += y[i];
    }
    for (std::size_t i = 0; i < d; ++i) y[i] /= s;
  }
  if (detail::wants_grad(tape, a)) {
    out.enable_grad();
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc, d, rows]() mutable {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = oc.value().data() + r * d;
        const T* dy = oc.grad().data() + r * d;
        T* dx = ac.grad().data() + r * d;
        T dot = T(0);
        for (std::size_t i = 0; i < d; ++i) dot += dy[i] * y[i];
        for (std::size_t i = 0; i < d; ++i) dx[i] += y[i] * (dy[i] - dot);
      }
    });
  }
  return out;
}

// logsumexp over the last dim; output drops that dim (scalar for 1-d input)
template <typename T>
Tensor<T> logsumexp(const Tensor<T>& a, Tape<T>* tape) {
  detail::check_finite("logsumexp", a);
  if (a.ndim() < 1) throw ShapeError("logsumexp: needs >=1-d input");
  const std::size_t d = static_cast<std::size_t>(a.shape().back());
  const std::size_t rows = a.numel() / d;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a.value().data() + r * d;
    T mx = x[0];
    for (std::size_t i = 1; i < d; ++i) mx = std::max(mx, x[i]);
    T s = T(0);
    for (std::size_t i = 0; i < d; ++i) s += std::exp(x[i] - mx);
    out.value()[r] = mx + std::log(s);
  }
  if (detail::wants_grad(tape, a)) {
    out.enable_grad();
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc, d, rows]() mutable {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* x = ac.value().data() + r * d;
        const T lse = oc.value()[r];
        const T g = oc.grad()[r];
        T* dx = ac.grad().data() + r * d;
        for (std::size_t i = 0; i < d; ++i) dx[i] += g * std::exp(x[i] - lse);
      }
    });
  }
  return out;
}

// layer norm over the last dim with learnable gain/bias
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& g, const Tensor<T>& b, Tape<T>* tape,
                    T eps = T(1e-5)) {
  detail::check_finite("layernorm", x);
  const std::size_t d = static_cast<std::size_t>(x.shape().back());
  if (g.numel() != d || b.numel() != d)
    throw ShapeError("layernorm: gain/bias length must match last dim " + shape_str(x.shape()));
  const std::size_t rows = x.numel() / d;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.value().data() + r * d;
    T mean = T(0);
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t i = 0; i < d; ++i) {
      const T c = xr[i] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    T* yr = out.value().data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      xhat[r * d + i] = (xr[i] - mean) * rs;
      yr[i] = xhat[r * d + i] * g.value()[i] + b.value()[i];
    }
  }
  if (tape && (x.requires_grad() || g.requires_grad() || b.requires_grad())) {
    out.enable_grad();
    Tensor<T> xc = x, gc = g, bc = b, oc = out;
    auto xh = std::make_shared<std::vector<T>>(std::move(xhat));
    auto rs = std::make_shared<std::vector<T>>(std::move(rstd));
    tape->record(out, [xc, gc, bc, oc, xh, rs, d, rows]() mutable {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* dy = oc.grad().data() + r * d;
        const T* xhr = xh->data() + r * d;
        if (gc.requires_grad() || bc.requires_grad()) {
          for (std::size_t i = 0; i < d; ++i) {
            if (gc.requires_grad()) gc.grad()[i] += dy[i] * xhr[i];
            if (bc.requires_grad()) bc.grad()[i] += dy[i];
          }
        }
        if (xc.requires_grad()) {
          T m1 = T(0), m2 = T(0);
          for (std::size_t i = 0; i < d; ++i) {
            const T dyh = dy[i] * gc.value()[i];
            m1 += dyh;
            m2 += dyh * xhr[i];
          }
          m1 /= static_cast<T>(d);
          m2 /= static_cast<T>(d);
          T* dx = xc.grad().data() + r * d;
          for (std::size_t i = 0; i < d; ++i) {
            const T dyh = dy[i] * gc.value()[i];
            dx[i] += (*rs)[r] * (dyh - m1 - xhr[i] * m2);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// embedding, indexing, concat
// ---------------------------------------------------------------------------

// Gathers rows of table [V, D] at the given ids; output [ids.size(), D].
template <typename T>
Tensor<T> embed_lookup(const Tensor<T>& table, const std::vector<int>& ids, Tape<T>* tape) {
  detail::check_finite("embed_lookup", table);
  if (table.ndim() != 2) throw ShapeError("embed_lookup: table must be 2-d");
  const int V = table.shape()[0], D = table.shape()[1];
  for (int id : ids)
    if (id < 0 || id >= V)
      throw ShapeError("embed_lookup: id " + std::to_string(id) + " out of range [0," +
                       std::to_string(V) + ")");
  Tensor<T> out = Tensor<T>::zeros({static_cast<int>(ids.size()), D});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.value().data() + static_cast<std::size_t>(ids[i]) * D, D,
                out.value().data() + i * D);
  if (detail::wants_grad(tape, table)) {
    out.enable_grad();
    Tensor<T> tc = table, oc = out;
    auto idc = std::make_shared<std::vector<int>>(ids);
    tape->record(out, [tc, oc, idc, D]() mutable {
      for (std::size_t i = 0; i < idc->size(); ++i) {
        T* dst = tc.grad().data() + static_cast<std::size_t>((*idc)[i]) * D;
        const T* src = oc.grad().data() + i * D;
        for (int j = 0; j < D; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

// Drops `dim` by selecting index `idx` along it.
template <typename T>
Tensor<T> select(const Tensor<T>& a, int dim, int idx, Tape<T>* tape) {
  detail::check_finite("select", a);
  if (dim < 0 || dim >= a.ndim() || idx < 0 || idx >= a.shape()[dim])
    throw ShapeError("select: dim/index out of range for " + shape_str(a.shape()));
  Shape out_shape;
  for (int d = 0; d < a.ndim(); ++d)
    if (d != dim) out_shape.push_back(a.shape()[d]);
  if (out_shape.empty()) out_shape = {1};
  const std::size_t outer = detail::leading_numel(a.shape(), dim);
  std::size_t inner = 1;
  for (int d = dim + 1; d < a.ndim(); ++d) inner *= static_cast<std::size_t>(a.shape()[d]);
  const std::size_t dimn = static_cast<std::size_t>(a.shape()[dim]);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(a.value().data() + (o * dimn + idx) * inner, inner,
                out.value().data() + o * inner);
  if (detail::wants_grad(tape, a)) {
    out.enable_grad();
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc, outer, inner, dimn, idx]() mutable {
      for (std::size_t o = 0; o < outer; ++o) {
        T* dst = ac.grad().data() + (o * dimn + static_cast<std::size_t>(idx)) * inner;
        const T* src = oc.grad().data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int dim, Tape<T>* tape) {
  detail::check_finite("concat", a);
  detail::check_finite("concat", b);
  if (a.ndim() != b.ndim() || dim < 0 || dim >= a.ndim())
    throw ShapeError("concat: rank mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  for (int d = 0; d < a.ndim(); ++d)
    if (d != dim && a.shape()[d] != b.shape()[d])
      throw ShapeError("concat: non-concat dims must match " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
  Shape out_shape = a.shape();
  out_shape[dim] += b.shape()[dim];
  const std::size_t outer = detail::leading_numel(a.shape(), dim);
  std::size_t inner = 1;
  for (int d = dim + 1; d < a.ndim(); ++d) inner *= static_cast<std::size_t>(a.shape()[d]);
  const std::size_t na = static_cast<std::size_t>(a.shape()[dim]) * inner;
  const std::size_t nb = static_cast<std::size_t>(b.shape()[dim]) * inner;
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.value().data() + o * na, na, out.value().data() + o * (na + nb));
    std::copy_n(b.value().data() + o * nb, nb, out.value().data() + o * (na + nb) + na);
  }
  if (tape && (a.requires_grad() || b.requires_grad())) {
    out.enable_grad();
    Tensor<T> ac = a, bc = b, oc = out;
    tape->record(out, [ac, bc, oc, outer, na, nb]() mutable {
      for (std::size_t o = 0; o < outer; ++o) {
        const T* src = oc.grad().data() + o * (na + nb);
        if (ac.requires_grad())
          for (std::size_t i = 0; i < na; ++i) ac.grad()[o * na + i] += src[i];
        if (bc.requires_grad())
          for (std::size_t i = 0; i < nb; ++i) bc.grad()[o * nb + i] += src[na + i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions and losses
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> sum(const Tensor<T>& a, Tape<T>* tape) {
  detail::check_finite("sum", a);
  T s = T(0);
  for (T v : a.value()) s += v;
  Tensor<T> out = Tensor<T>::scalar(s);
  if (detail::wants_grad(tape, a)) {
    out.enable_grad();
    Tensor<T> ac = a, oc = out;
    tape->record(out, [ac, oc]() mutable {
      const T g = oc.grad()[0];
      for (std::size_t i = 0; i < ac.numel(); ++i) ac.grad()[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, Tape<T>* tape) {
  const T inv = T(1) / static_cast<T>(a.numel());
  return scale(sum(a, tape), inv, tape);
}

// mean squared error over all elements
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  detail::check_finite("mse", a);
  detail::check_finite("mse", b);
  if (a.shape() != b.shape())
    throw ShapeError("mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const std::size_t n = a.numel();
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  Tensor<T> out = Tensor<T>::scalar(s / static_cast<T>(n));
  if (tape && (a.requires_grad() || b.requires_grad())) {
    out.enable_grad();
    Tensor<T> ac = a, bc = b, oc = out;
    tape->record(out, [ac, bc, oc, n]() mutable {
      const T g = oc.grad()[0] * T(2) / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const T d = ac.value()[i] - bc.value()[i];
        if (ac.requires_grad()) ac.grad()[i] += g * d;
        if (bc.requires_grad()) bc.grad()[i] -= g * d;
      }
    });
  }
  return out;
}

// fused log-softmax cross entropy, mean over the batch; logits [B, K]
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels, Tape<T>* tape) {
  detail::check_finite("cross_entropy", logits);
  if (logits.ndim() != 2) throw ShapeError("cross_entropy: logits must be 2-d");
  const std::size_t B = static_cast<std::size_t>(logits.shape()[0]);
  const std::size_t K = static_cast<std::size_t>(logits.shape()[1]);
  if (labels.size() != B) throw ShapeError("cross_entropy: label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= static_cast<int>(K))
      throw ContractError("cross_entropy: label " + std::to_string(y) + " out of range [0," +
                          std::to_string(K) + ")");
  T loss = T(0);
  std::vector<T> lse(B);
  for (std::size_t r = 0; r < B; ++r) {
    const T* x = logits.value().data() + r * K;
    T mx = x[0];
    for (std::size_t i = 1; i < K; ++i) mx = std::max(mx, x[i]);
    T s = T(0);
    for (std::size_t i = 0; i < K; ++i) s += std::exp(x[i] - mx);
    lse[r] = mx + std::log(s);
    loss += lse[r] - x[labels[r]];
  }
  Tensor<T> out = Tensor<T>::scalar(loss / static_cast<T>(B));
  if (detail::wants_grad(tape, logits)) {
    out.enable_grad();
    Tensor<T> lc = logits, oc = out;
    auto lsec = std::make_shared<std::vector<T>>(std::move(lse));
    auto lab = std::make_shared<std::vector<int>>(labels);
    tape->record(out, [lc, oc, lsec, lab, B, K]() mutable {
      const T g = oc.grad()[0] / static_cast<T>(B);
      for (std::size_t r = 0; r < B; ++r) {
        const T* x = lc.value().data() + r * K;
        T* dx = lc.grad().data() + r * K;
        for (std::size_t i = 0; i < K; ++i) {
          T p = std::exp(x[i] - (*lsec)[r]);
          if (static_cast<int>(i) == (*lab)[r]) p -= T(1);
          dx[i] += g * p;
        }
      }
    });
  }
  return out;
}

// out = sum_l w[l] * xs[l], all xs the same shape, w 1-d of length xs.size()
template <typename T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& xs, const Tensor<T>& w, Tape<T>* tape) {
  if (xs.empty()) throw ShapeError("weighted_sum: empty input list");
  if (w.ndim() != 1 || w.numel() != xs.size())
    throw ShapeError("weighted_sum: weight length " + std::to_string(w.numel()) +
                     " != " + std::to_string(xs.size()) + " inputs");
  for (const auto& x : xs) {
    detail::check_finite("weighted_sum", x);
    if (x.shape() != xs[0].shape())
      throw ShapeError("weighted_sum: inconsistent input shapes " + shape_str(x.shape()) +
                       " vs " + shape_str(xs[0].shape()));
  }
  detail::check_finite("weighted_sum", w);
  const std::size_t n = xs[0].numel();
  Tensor<T> out = Tensor<T>::zeros(xs[0].shape());
  for (std::size_t l = 0; l < xs.size(); ++l) {
    const T wl = w.value()[l];
    for (std::size_t i = 0; i < n; ++i) out.value()[i] += wl * xs[l].value()[i];
  }
  bool any = w.requires_grad();
  for (const auto& x : xs) any = any || x.requires_grad();
  if (tape && any) {
    out.enable_grad();
    auto xc = std::make_shared<std::vector<Tensor<T>>>(xs);
    Tensor<T> wc = w, oc = out;
    tape->record(out, [xc, wc, oc, n]() mutable {
      for (std::size_t l = 0; l < xc->size(); ++l) {
        Tensor<T>& x = (*xc)[l];
        if (x.requires_grad()) {
          const T wl = wc.value()[l];
          for (std::size_t i = 0; i < n; ++i) x.grad()[i] += wl * oc.grad()[i];
        }
        if (wc.requires_grad()) {
          T dot = T(0);
          for (std::size_t i = 0; i < n; ++i) dot += oc.grad()[i] * x.value()[i];
          wc.grad()[l] += dot;
        }
      }
    });
  }
  return out;
}

}  // namespace viood::ad
