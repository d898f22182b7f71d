#pragma once

#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "viood/checkpoint.hpp"
#include "viood/config.hpp"
#include "viood/data.hpp"
#include "viood/metrics.hpp"
#include "viood/report.hpp"
#include "viood/scoring.hpp"

namespace viood::run {

namespace salt {
// Independent RNG streams so batch order is identical across objectives.
inline constexpr std::uint64_t kInit = 0x0;
inline constexpr std::uint64_t kShuffle = 0xa5a5a5a5a5a5a5a5ull;
inline constexpr std::uint64_t kNoise = 0xc3c3c3c3c3c3c3c3ull;
inline constexpr std::uint64_t kEval = 0xe1e1e1e1e1e1e1e1ull;
inline constexpr std::uint64_t kValBank = 0x5eed5eed5eed5eedull;
}  // namespace salt

template <typename T>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() {
  return "f32";
}
template <>
inline const char* dtype_name<double>() {
  return "f64";
}

// One trained (or loadable) model: encoder plus the objective's head, with
// train / evaluate / probe / export entry points.
template <typename T>
class Pipeline {
 public:
  Pipeline(io::RunConfig cfg, const io::Corpus& corpus) : cfg_(std::move(cfg)), corpus_(&corpus) {
    cfg_.head.k_classes = corpus.k_classes();
    cfg_.validate();
    Rng rng(cfg_.seed ^ salt::kInit);
    encoder_ = nn::Encoder<T>(cfg_.encoder, corpus.vocab.size(), rng);
    if (joint())
      head_ = vi::VIHead<T>(cfg_.head, cfg_.encoder.layers, cfg_.encoder.d_model, rng);
    else
      base_ = vi::BaselineHead<T>(cfg_.encoder.d_model, cfg_.head.k_classes, rng);
  }

  bool joint() const { return cfg_.objective == "joint"; }
  const io::RunConfig& config() const { return cfg_; }
  const io::Corpus& corpus() const { return *corpus_; }
  nn::Encoder<T>& encoder() { return encoder_; }
  vi::VIHead<T>& head() {
    if (!joint()) throw ContractError("no VI head on a discriminative model");
    return head_;
  }

  std::vector<ad::NamedParam<T>> parameters() {
    std::vector<ad::NamedParam<T>> out;
    encoder_.collect(out);
    if (joint())
      head_.collect(out);
    else
      base_.collect(out);
    return out;
  }

  // ---- training -----------------------------------------------------------
  io::TrainLog train() {
    auto params = parameters();
    ad::AdamW<T> opt(params, static_cast<T>(cfg_.lr), static_cast<T>(cfg_.weight_decay));
    Rng rng_shuffle(cfg_.seed ^ salt::kShuffle);
    Rng rng_noise(cfg_.seed ^ salt::kNoise);

    const auto& train_set = corpus_->id_train;
    const std::size_t n = train_set.size();
    const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
    const long batches_per_epoch = static_cast<long>((n + bs - 1) / bs);
    const long total_steps = batches_per_epoch * cfg_.epochs;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    io::TrainLog log;
    long step = 0;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      rng_shuffle.shuffle(order);
      double ep_total = 0, ep_ce = 0, ep_recon = 0, ep_kl = 0, ep_beta = 0;
      for (std::size_t b0 = 0; b0 < n; b0 += bs) {
        const std::size_t b1 = std::min(n, b0 + bs);
        std::vector<std::vector<int>> batch_ids;
        std::vector<int> batch_labels;
        for (std::size_t i = b0; i < b1; ++i) {
          const auto& rec = train_set[order[i]];
          batch_ids.push_back(text::tokenize(rec.text, corpus_->vocab, cfg_.encoder.max_len));
          batch_labels.push_back(rec.label);
        }
        ad::Tape<T> tape;
        vi::LossBreakdown<T> bd;
        ad::Tensor<T> loss;
        auto stack = encoder_.forward(batch_ids, &tape);
        if (joint()) {
          auto eps = head_.sample_eps(static_cast<int>(batch_labels.size()), &rng_noise);
          loss = head_.vi_loss(stack, batch_labels, step, total_steps, &tape, eps, &bd);
        } else {
          loss = base_.loss(stack, batch_labels, &tape);
          bd.total = bd.ce = loss.item();
        }
        if (!std::isfinite(static_cast<double>(loss.item()))) {
          std::ostringstream os;
          os << "non-finite loss at epoch " << epoch << ", step " << step << "; batch indices:";
          for (std::size_t i = b0; i < b1; ++i) os << " " << order[i];
          throw NumericError(os.str());
        }
        opt.set_lr(static_cast<T>(cfg_.lr *
                                  (1.0 - static_cast<double>(step) / static_cast<double>(total_steps))));
        tape.backward(loss);
        opt.step();
        opt.zero_grad();
        ++step;
        ep_total += static_cast<double>(bd.total);
        ep_ce += static_cast<double>(bd.ce);
        ep_recon += static_cast<double>(bd.recon);
        ep_kl += static_cast<double>(bd.kl);
        ep_beta += bd.beta;
      }
      io::EpochLog el;
      el.epoch = epoch;
      const double nb = static_cast<double>(batches_per_epoch);
      el.total = ep_total / nb;
      el.ce = ep_ce / nb;
      el.recon = ep_recon / nb;
      el.kl = ep_kl / nb;
      el.beta = ep_beta / nb;
      if (joint()) el.s_weights = combination_weights();
      el.batch_order_hash = hash_order(order);
      log.epochs.push_back(std::move(el));
    }
    fit_banks();
    return log;
  }

  void fit_banks() {
    std::vector<int> labels;
    for (const auto& r : corpus_->id_train) labels.push_back(r.label);
    const auto train_lat = latents(corpus_->id_train, 0).latents;
    bank_ = ood::fit_gaussian_bank(flatten(train_lat), latent_dim(), labels,
                                   cfg_.head.k_classes);
    const auto val_lat = latents(corpus_->id_val, 1).latents;
    vbank_ = ood::build_validation_bank(flatten(val_lat), latent_dim(), 5000,
                                        cfg_.seed ^ salt::kValBank);
    has_banks_ = true;
  }

  // ---- scoring / evaluation ----------------------------------------------
  struct Encoded {
    std::vector<std::vector<double>> latents;  // z for joint, h_CLS^{L-1} for disc
    std::vector<std::vector<double>> logits;
  };

  // Frozen-model pass. `salt_id` keys the sampling noise stream so repeated
  // passes over the same split are reproducible.
  Encoded latents(const std::vector<io::Record>& records, std::uint64_t salt_id) const {
    Encoded out;
    Rng noise(cfg_.seed ^ salt::kEval ^ (salt_id * 0x9e3779b97f4a7c15ull + 1));
    Rng* noise_ptr = (joint() && !cfg_.deterministic_inference) ? &noise : nullptr;
    const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
    for (std::size_t b0 = 0; b0 < records.size(); b0 += bs) {
      const std::size_t b1 = std::min(records.size(), b0 + bs);
      std::vector<std::vector<int>> ids;
      for (std::size_t i = b0; i < b1; ++i)
        ids.push_back(text::tokenize(records[i].text, corpus_->vocab, cfg_.encoder.max_len));
      auto stack = encoder_.forward(ids, nullptr);
      ad::Tensor<T> rep, logits;
      if (joint()) {
        auto post = head_.posterior(stack.back(), nullptr, noise_ptr);
        rep = post.z;
        logits = head_.classify(rep, nullptr);
      } else {
        rep = stack.back();
        logits = base_.classify(rep, nullptr);
      }
      append_rows(out.latents, rep);
      append_rows(out.logits, logits);
    }
    return out;
  }

  // Per-layer [CLS] states for every record: result[layer][row][dim].
  std::vector<std::vector<std::vector<double>>> layer_states(
      const std::vector<io::Record>& records) const {
    std::vector<std::vector<std::vector<double>>> out(
        static_cast<std::size_t>(cfg_.encoder.layers));
    const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
    for (std::size_t b0 = 0; b0 < records.size(); b0 += bs) {
      const std::size_t b1 = std::min(records.size(), b0 + bs);
      std::vector<std::vector<int>> ids;
      for (std::size_t i = b0; i < b1; ++i)
        ids.push_back(text::tokenize(records[i].text, corpus_->vocab, cfg_.encoder.max_len));
      auto stack = encoder_.forward(ids, nullptr);
      for (std::size_t l = 0; l < stack.size(); ++l) append_rows(out[l], stack[l]);
    }
    return out;
  }

  std::vector<double> score_split(const Encoded& enc, const std::string& score) const {
    std::vector<double> out;
    out.reserve(enc.latents.size());
    for (std::size_t i = 0; i < enc.latents.size(); ++i) {
      if (score == "msp")
        out.push_back(ood::msp_score(enc.logits[i]));
      else if (score == "energy")
        out.push_back(ood::energy_score(enc.logits[i]));
      else if (score == "maha")
        out.push_back(ood::maha_score(enc.latents[i], bank_));
      else if (score == "cosine")
        out.push_back(ood::cosine_score(enc.latents[i], vbank_));
      else
        throw ContractError("unknown score function '" + score + "'");
    }
    return out;
  }

  io::EvalReport evaluate() const {
    if (!has_banks_)
      throw ContractError("evaluate: model has no fitted score banks (train or load first)");
    const auto t0 = std::chrono::steady_clock::now();
    io::EvalReport rep;
    rep.objective = cfg_.objective;
    rep.seed = cfg_.seed;
    rep.score_names = cfg_.scores;
    rep.ood_names = corpus_->ood_names;

    const Encoded id_enc = latents(corpus_->id_test, 2);
    std::vector<int> id_labels;
    for (const auto& r : corpus_->id_test) id_labels.push_back(r.label);
    rep.id_accuracy = 100.0 * eval::id_accuracy(id_enc.logits, id_labels);

    for (std::size_t o = 0; o < corpus_->ood_test.size(); ++o) {
      const Encoded ood_enc = latents(corpus_->ood_test[o], 3 + o);
      std::vector<io::MetricCell> row;
      for (const auto& score : cfg_.scores) {
        eval::ScoredSet set{score_split(id_enc, score), score_split(ood_enc, score)};
        io::MetricCell c;
        c.auroc = 100.0 * eval::auroc(set);
        c.far95 = 100.0 * eval::far_at_95(set);
        c.aupr = 100.0 * eval::aupr(set);
        row.push_back(c);
      }
      rep.cells.push_back(std::move(row));
    }
    rep.compute_macro();
    if (joint()) rep.s_weights = combination_weights();
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  }

  // Distance-score probe over every layer's [CLS] state.
  io::ProbeTable probe_layers() const {
    io::ProbeTable table;
    table.func_names = {"maha", "cosine"};
    table.ood_names = corpus_->ood_names;
    std::vector<int> labels;
    for (const auto& r : corpus_->id_train) labels.push_back(r.label);

    const auto train_st = layer_states(corpus_->id_train);
    const auto val_st = layer_states(corpus_->id_val);
    const auto test_st = layer_states(corpus_->id_test);
    std::vector<decltype(layer_states(corpus_->id_test))> ood_st;
    for (const auto& ood : corpus_->ood_test) ood_st.push_back(layer_states(ood));

    const int dim = cfg_.encoder.d_model;
    for (int l = 0; l < cfg_.encoder.layers; ++l) {
      const std::size_t lu = static_cast<std::size_t>(l);
      auto bank = ood::fit_gaussian_bank(flatten(train_st[lu]), dim, labels, cfg_.head.k_classes);
      auto vbank = ood::build_validation_bank(flatten(val_st[lu]), dim, 5000,
                                              cfg_.seed ^ salt::kValBank);
      std::vector<std::vector<double>> per_ood;
      for (const auto& ost : ood_st) {
        std::vector<double> per_func;
        for (const auto& func : table.func_names) {
          eval::ScoredSet set;
          for (const auto& z : test_st[lu])
            set.id_scores.push_back(func == "maha" ? ood::maha_score(z, bank)
                                                   : ood::cosine_score(z, vbank));
          for (const auto& z : ost[lu])
            set.ood_scores.push_back(func == "maha" ? ood::maha_score(z, bank)
                                                    : ood::cosine_score(z, vbank));
          per_func.push_back(100.0 * eval::auroc(set));
        }
        per_ood.push_back(std::move(per_func));
      }
      table.auroc.push_back(std::move(per_ood));
    }
    return table;
  }

  std::vector<double> combination_weights() const {
    if (!joint()) throw ContractError("no combination vector on a discriminative model");
    auto w = ad::softmax(head_.s_logits(), static_cast<ad::Tape<T>*>(nullptr));
    std::vector<double> out;
    for (T v : w.value()) out.push_back(static_cast<double>(v));
    return out;
  }

  // ---- persistence --------------------------------------------------------
  io::Checkpoint to_checkpoint() {
    io::Checkpoint ckpt;
    ckpt.header["config"] = cfg_.to_json();
    ckpt.header["vocab_hash"] = corpus_->vocab.hash();
    ckpt.header["k_classes"] = cfg_.head.k_classes;
    ckpt.header["label_names"] = corpus_->label_names;
    ckpt.header["dtype"] = dtype_name<T>();
    for (auto& p : parameters()) ckpt.add(p.name, p.tensor.shape(), p.tensor.value());
    if (has_banks_) {
      io::put_gaussian_bank(ckpt, bank_);
      io::put_validation_bank(ckpt, vbank_);
    }
    return ckpt;
  }

  static Pipeline from_checkpoint(const io::Checkpoint& ckpt, const io::Corpus& corpus) {
    if (ckpt.header["dtype"].get<std::string>() != dtype_name<T>())
      throw CompatError("checkpoint dtype " + ckpt.header["dtype"].get<std::string>() +
                        " does not match requested " + dtype_name<T>());
    if (ckpt.header["vocab_hash"].get<std::string>() != corpus.vocab.hash())
      throw CompatError("checkpoint vocabulary hash does not match the loaded dataset");
    if (ckpt.header["k_classes"].get<int>() != corpus.k_classes())
      throw CompatError("checkpoint class count does not match the loaded dataset");
    io::RunConfig cfg = io::RunConfig::from_json(ckpt.header["config"]);
    Pipeline p(cfg, corpus);
    for (auto& param : p.parameters()) {
      auto data = ckpt.get<T>(param.name);
      if (data.size() != param.tensor.numel())
        throw CompatError("checkpoint entry '" + param.name + "' has unexpected size");
      param.tensor.value() = std::move(data);
    }
    if (ckpt.has("bank.means")) {
      p.bank_ = io::get_gaussian_bank(ckpt);
      p.vbank_ = io::get_validation_bank(ckpt);
      p.has_banks_ = true;
    }
    return p;
  }

  const ood::GaussianBank& gaussian_bank() const { return bank_; }
  const ood::ValidationBank& validation_bank() const { return vbank_; }
  bool has_banks() const { return has_banks_; }

 private:
  int latent_dim() const { return joint() ? cfg_.head.d_z : cfg_.encoder.d_model; }

  static std::vector<double> flatten(const std::vector<std::vector<double>>& rows) {
    std::vector<double> out;
    if (rows.empty()) return out;
    out.reserve(rows.size() * rows[0].size());
    for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
    return out;
  }

  static void append_rows(std::vector<std::vector<double>>& dst, const ad::Tensor<T>& t) {
    const int rows = t.shape()[0];
    const std::size_t cols = t.numel() / static_cast<std::size_t>(rows);
    for (int r = 0; r < rows; ++r) {
      std::vector<double> row(cols);
      for (std::size_t c = 0; c < cols; ++c)
        row[c] = static_cast<double>(t.value()[static_cast<std::size_t>(r) * cols + c]);
      dst.push_back(std::move(row));
    }
  }

  static std::string hash_order(const std::vector<std::size_t>& order) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t v : order) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xff;
        h *= 1099511628211ull;
      }
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
  }

  io::RunConfig cfg_;
  const io::Corpus* corpus_;
  nn::Encoder<T> encoder_;
  vi::VIHead<T> head_;
  vi::BaselineHead<T> base_;
  ood::GaussianBank bank_;
  ood::ValidationBank vbank_;
  bool has_banks_ = false;
};

}  // namespace viood::run
