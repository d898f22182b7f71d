#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "viood/ops.hpp"
#include "viood/optim.hpp"
#include "viood/rng.hpp"
#include "viood/vocab.hpp"

namespace viood::nn {

using ad::NamedParam;
using ad::Tape;
using ad::Tensor;

struct EncoderConfig {
  // `layers` counts the embedding output as layer 0, so the encoder runs
  // layers-1 transformer blocks and the hidden stack has `layers` rows.
  int layers = 6;
  int d_model = 64;
  int heads = 4;
  int ffn_dim = 256;
  int max_len = 64;

  void validate() const {
    if (layers < 2) throw ContractError("encoder: layers must be >= 2");
    if (d_model % heads != 0) throw ContractError("encoder: d_model must be divisible by heads");
    if (max_len < 2) throw ContractError("encoder: max_len must be >= 2");
  }
};

template <typename T>
struct Linear {
  Tensor<T> W, b;

  void init(int in_dim, int out_dim, Rng& rng, bool zero_bias = true) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    std::vector<T> w(static_cast<std::size_t>(in_dim) * out_dim);
    for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
    W = Tensor<T>::from({in_dim, out_dim}, std::move(w), true);
    b = Tensor<T>::zeros({out_dim}, true);
    if (!zero_bias)
      for (auto& v : b.value()) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const {
    return ad::add(ad::matmul(x, W, tape), b, tape);
  }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix) {
    out.push_back({prefix + ".W", W});
    out.push_back({prefix + ".b", b});
  }
};

template <typename T>
struct EncoderBlock {
  Tensor<T> ln1_g, ln1_b, ln2_g, ln2_b;
  Linear<T> q, k, v, o, ffn1, ffn2;

  void init(const EncoderConfig& cfg, Rng& rng) {
    auto ones = [&](int d) {
      Tensor<T> t = Tensor<T>::zeros({d}, true);
      std::fill(t.value().begin(), t.value().end(), T(1));
      return t;
    };
    ln1_g = ones(cfg.d_model);
    ln1_b = Tensor<T>::zeros({cfg.d_model}, true);
    ln2_g = ones(cfg.d_model);
    ln2_b = Tensor<T>::zeros({cfg.d_model}, true);
    q.init(cfg.d_model, cfg.d_model, rng);
    k.init(cfg.d_model, cfg.d_model, rng);
    v.init(cfg.d_model, cfg.d_model, rng);
    o.init(cfg.d_model, cfg.d_model, rng);
    ffn1.init(cfg.d_model, cfg.ffn_dim, rng);
    ffn2.init(cfg.ffn_dim, cfg.d_model, rng);
  }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix) {
    out.push_back({prefix + ".ln1.g", ln1_g});
    out.push_back({prefix + ".ln1.b", ln1_b});
    q.collect(out, prefix + ".q");
    k.collect(out, prefix + ".k");
    v.collect(out, prefix + ".v");
    o.collect(out, prefix + ".o");
    out.push_back({prefix + ".ln2.g", ln2_g});
    out.push_back({prefix + ".ln2.b", ln2_b});
    ffn1.collect(out, prefix + ".ffn1");
    ffn2.collect(out, prefix + ".ffn2");
  }

  // Pre-layer-norm block: x + attn(ln1(x)), then x + ffn(ln2(x)).
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& mask, const EncoderConfig& cfg,
                    int batch, int seq, Tape<T>* tape) const {
    const int D = cfg.d_model, H = cfg.heads, dh = D / H;
    auto split_heads = [&](const Tensor<T>& t) {
      // [B,N,D] -> [B,H,N,dh]
      return ad::transpose(ad::reshape(t, {batch, seq, H, dh}, tape), 1, 2, tape);
    };
    Tensor<T> h = ad::layernorm(x, ln1_g, ln1_b, tape);
    Tensor<T> qh = split_heads(q.forward(h, tape));
    Tensor<T> kh = split_heads(k.forward(h, tape));
    Tensor<T> vh = split_heads(v.forward(h, tape));
    Tensor<T> att = ad::matmul(ad::scale(qh, static_cast<T>(1.0 / std::sqrt(double(dh))), tape),
                               ad::transpose(kh, 2, 3, tape), tape);
    att = ad::softmax(ad::add(att, mask, tape), tape);
    Tensor<T> ctx = ad::matmul(att, vh, tape);  // [B,H,N,dh]
    ctx = ad::reshape(ad::transpose(ctx, 1, 2, tape), {batch, seq, D}, tape);
    Tensor<T> x1 = ad::add(x, o.forward(ctx, tape), tape);
    Tensor<T> h2 = ad::layernorm(x1, ln2_g, ln2_b, tape);
    Tensor<T> f = ffn2.forward(ad::gelu(ffn1.forward(h2, tape), tape), tape);
    return ad::add(x1, f, tape);
  }
};

// BERT-style encoder exposing the [CLS] hidden state of every layer.
// Row 0 of the returned stack is the post-embedding state.
template <typename T>
class Encoder {
 public:
  Encoder() = default;

  Encoder(const EncoderConfig& cfg, int vocab_size, Rng& rng) : cfg_(cfg), vocab_size_(vocab_size) {
    cfg.validate();
    std::vector<T> te(static_cast<std::size_t>(vocab_size) * cfg.d_model);
    for (auto& v : te) v = static_cast<T>(rng.normal() * 0.02);
    tok_emb_ = Tensor<T>::from({vocab_size, cfg.d_model}, std::move(te), true);
    std::vector<T> pe(static_cast<std::size_t>(cfg.max_len) * cfg.d_model);
    for (auto& v : pe) v = static_cast<T>(rng.normal() * 0.02);
    pos_emb_ = Tensor<T>::from({cfg.max_len, cfg.d_model}, std::move(pe), true);
    blocks_.resize(static_cast<std::size_t>(cfg.layers - 1));
    for (auto& b : blocks_) b.init(cfg, rng);
  }

  const EncoderConfig& config() const { return cfg_; }
  int vocab_size() const { return vocab_size_; }
  Tensor<T>& token_embedding() { return tok_emb_; }

  void collect(std::vector<NamedParam<T>>& out, const std::string& prefix = "enc") {
    out.push_back({prefix + ".tok_emb", tok_emb_});
    out.push_back({prefix + ".pos_emb", pos_emb_});
    for (std::size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].collect(out, prefix + ".block" + std::to_string(i));
  }

  // ids: [B][N], all rows the same length N <= max_len.
  // Returns the per-layer [CLS] states, `layers` tensors of shape [B, d_model].
  std::vector<Tensor<T>> forward(const std::vector<std::vector<int>>& ids, Tape<T>* tape) const {
    if (ids.empty()) throw ContractError("encoder: empty batch");
    const int B = static_cast<int>(ids.size());
    const int N = static_cast<int>(ids[0].size());
    if (N < 1 || N > cfg_.max_len)
      throw ContractError("encoder: sequence length " + std::to_string(N) +
                          " outside [1, max_len]");
    std::vector<int> flat, pos;
    flat.reserve(static_cast<std::size_t>(B) * N);
    pos.reserve(flat.capacity());
    for (const auto& row : ids) {
      if (static_cast<int>(row.size()) != N)
        throw ContractError("encoder: ragged batch");
      for (int id : row) {
        if (id < 0 || id >= vocab_size_)
          throw VocabError("encoder: token id " + std::to_string(id) + " outside vocabulary of " +
                           std::to_string(vocab_size_));
        flat.push_back(id);
      }
      for (int p = 0; p < N; ++p) pos.push_back(p);
    }

    Tensor<T> x = ad::add(ad::embed_lookup(tok_emb_, flat, tape),
                          ad::embed_lookup(pos_emb_, pos, tape), tape);
    x = ad::reshape(x, {B, N, cfg_.d_model}, tape);

    std::vector<Tensor<T>> stack;
    stack.reserve(static_cast<std::size_t>(cfg_.layers));
    stack.push_back(ad::select(x, 1, 0, tape));

    Tensor<T> mask = attention_mask(ids, B, N);
    for (const auto& blk : blocks_) {
      x = blk.forward(x, mask, cfg_, B, N, tape);
      stack.push_back(ad::select(x, 1, 0, tape));
    }
    return stack;
  }

 private:
  // Additive key mask [B,H,N,N]: -1e9 on [PAD] key columns.
  Tensor<T> attention_mask(const std::vector<std::vector<int>>& ids, int B, int N) const {
    Tensor<T> mask = Tensor<T>::zeros({B, cfg_.heads, N, N});
    auto& m = mask.value();
    const std::size_t per_b = static_cast<std::size_t>(cfg_.heads) * N * N;
    for (int b = 0; b < B; ++b)
      for (int j = 0; j < N; ++j)
        if (ids[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)] ==
            text::Vocabulary::kPad)
          for (int h = 0; h < cfg_.heads; ++h)
            for (int i = 0; i < N; ++i)
              m[static_cast<std::size_t>(b) * per_b +
                (static_cast<std::size_t>(h) * N + i) * N + j] = T(-1e9);
    return mask;
  }

  EncoderConfig cfg_;
  int vocab_size_ = 0;
  Tensor<T> tok_emb_, pos_emb_;
  std::vector<EncoderBlock<T>> blocks_;
};

}  // namespace viood::nn
