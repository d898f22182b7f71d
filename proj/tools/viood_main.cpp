#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "viood/run.hpp"

namespace {

using viood::io::Checkpoint;
using viood::io::Corpus;
using viood::io::RunConfig;

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw viood::IngestError("cannot write " + path);
  out << content;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

std::string s_weights_csv(const std::vector<double>& w) {
  std::ostringstream os;
  os << "layer,weight\n";
  os.precision(17);
  for (std::size_t l = 0; l < w.size(); ++l) os << l << "," << w[l] << "\n";
  return os.str();
}

template <typename T>
void run_train(const RunConfig& cfg, const Corpus& corpus, const std::string& out_dir) {
  viood::run::Pipeline<T> pipe(cfg, corpus);
  const auto t0 = std::chrono::steady_clock::now();
  auto log = pipe.train();
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::filesystem::create_directories(out_dir);
  pipe.to_checkpoint().save(out_dir + "/checkpoint.ckpt");
  corpus.vocab.save(out_dir + "/vocab.txt");
  write_json(out_dir + "/train_log.json", log.to_json());
  if (pipe.joint()) write_text(out_dir + "/s_weights.csv", s_weights_csv(pipe.combination_weights()));
  std::cout << "trained " << cfg.objective << " model in " << secs << " s; checkpoint at "
            << out_dir << "/checkpoint.ckpt\n";
  const auto& last = log.epochs.back();
  std::cout << "final epoch loss: total=" << last.total << " ce=" << last.ce
            << " recon=" << last.recon << " kl=" << last.kl << " beta=" << last.beta << "\n";
}

template <typename T>
viood::io::EvalReport run_eval(const Checkpoint& ckpt, const Corpus& corpus) {
  auto pipe = viood::run::Pipeline<T>::from_checkpoint(ckpt, corpus);
  return pipe.evaluate();
}

template <typename T>
viood::io::ProbeTable run_probe(const Checkpoint& ckpt, const Corpus& corpus) {
  auto pipe = viood::run::Pipeline<T>::from_checkpoint(ckpt, corpus);
  return pipe.probe_layers();
}

std::string ckpt_dtype(const Checkpoint& ckpt) {
  return ckpt.header["dtype"].get<std::string>();
}

std::vector<double> export_weights(const Checkpoint& ckpt) {
  if (!ckpt.has("head.s_logits"))
    throw viood::ContractError("no combination vector: checkpoint is from a discriminative model");
  std::vector<double> logits;
  if (ckpt_dtype(ckpt) == "f32") {
    for (float v : ckpt.get<float>("head.s_logits")) logits.push_back(v);
  } else {
    logits = ckpt.get<double>("head.s_logits");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double v : logits) denom += std::exp(v - mx);
  std::vector<double> w;
  for (double v : logits) w.push_back(std::exp(v - mx) / denom);
  return w;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::string ckpt_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string objective;
  int deterministic = -1;  // -1 unset, else 0/1
};

RunConfig load_config(const CommonArgs& args) {
  RunConfig cfg = RunConfig::from_file(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  if (!args.objective.empty()) cfg.objective = args.objective;
  if (args.deterministic >= 0) cfg.deterministic_inference = args.deterministic != 0;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool need_config, bool need_ckpt) {
  if (need_config)
    cmd->add_option("--config", args.config_path, "run configuration file (JSON)")->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  if (need_ckpt) cmd->add_option("--ckpt", args.ckpt_path, "checkpoint path");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&args](std::uint64_t s) { args.seed = s; args.seed_set = true; }, "RNG seed");
  cmd->add_option("--objective", args.objective, "joint|disc")
      ->check(CLI::IsMember({"joint", "disc"}));
  cmd->add_flag_callback(
      "--deterministic-inference", [&args]() { args.deterministic = 1; },
      "use z = mu at inference (the default)");
  cmd->add_flag_callback(
      "--sampled-inference", [&args]() { args.deterministic = 0; },
      "use one sampled z at inference instead of z = mu");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational text OOD detection toolkit"};
  app.require_subcommand(1);

  CommonArgs args;

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train, args, true, false);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on ID/OOD test sets");
  add_common(eval, args, true, true);

  auto* probe = app.add_subcommand("probe-layers", "per-layer distance-score AUROC table");
  add_common(probe, args, true, true);

  auto* exps = app.add_subcommand("export-s", "export the layer-combination weights");
  exps->add_option("--ckpt", args.ckpt_path, "checkpoint path")->required();
  exps->add_option("--out", args.out_dir, "output directory");

  auto* cmp = app.add_subcommand("compare-objectives",
                                 "train joint and discriminative with the same seed");
  add_common(cmp, args, true, false);

  auto* synth = app.add_subcommand("make-synthetic", "generate the bundled synthetic dataset");
  std::string synth_dir = "data/synthetic";
  std::uint64_t synth_seed = 0;
  int n_train = 2000, n_val = 500, n_test = 500, n_ood = 500;
  synth->add_option("--out", synth_dir, "dataset directory");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--train", n_train, "training examples");
  synth->add_option("--val", n_val, "validation examples");
  synth->add_option("--test", n_test, "ID test examples");
  synth->add_option("--ood", n_ood, "OOD test examples");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      auto spec = viood::io::make_synthetic(synth_dir, synth_seed, n_train, n_val, n_test, n_ood);
      std::cout << "wrote " << spec.id_train << ", " << spec.id_val << ", " << spec.id_test
                << ", " << spec.ood_test[0] << "\n";
      return 0;
    }
    if (exps->parsed()) {
      const auto w = export_weights(Checkpoint::load(args.ckpt_path));
      const std::string csv = s_weights_csv(w);
      std::cout << csv;
      if (!args.out_dir.empty()) {
        std::filesystem::create_directories(args.out_dir);
        write_text(args.out_dir + "/s_weights.csv", csv);
      }
      return 0;
    }

    RunConfig cfg = load_config(args);
    Corpus corpus = viood::io::load_dataset(cfg.data);

    if (train->parsed()) {
      if (cfg.precision == "f32")
        run_train<float>(cfg, corpus, args.out_dir);
      else
        run_train<double>(cfg, corpus, args.out_dir);
      return 0;
    }
    if (eval->parsed() || probe->parsed()) {
      const std::string path =
          args.ckpt_path.empty() ? args.out_dir + "/checkpoint.ckpt" : args.ckpt_path;
      Checkpoint ckpt = Checkpoint::load(path);
      if (args.deterministic >= 0)
        ckpt.header["config"]["deterministic_inference"] = args.deterministic != 0;
      std::filesystem::create_directories(args.out_dir);
      if (eval->parsed()) {
        auto rep = ckpt_dtype(ckpt) == "f32" ? run_eval<float>(ckpt, corpus)
                                             : run_eval<double>(ckpt, corpus);
        write_json(args.out_dir + "/report.json", rep.to_json());
        write_text(args.out_dir + "/report.txt", rep.to_table());
        std::cout << rep.to_table();
      } else {
        auto table = ckpt_dtype(ckpt) == "f32" ? run_probe<float>(ckpt, corpus)
                                               : run_probe<double>(ckpt, corpus);
        write_json(args.out_dir + "/probe.json", table.to_json());
        write_text(args.out_dir + "/probe.txt", table.to_table());
        std::cout << table.to_table();
      }
      return 0;
    }
    if (cmp->parsed()) {
      nlohmann::json side;
      std::ostringstream table;
      for (const std::string obj : {"joint", "disc"}) {
        RunConfig c = cfg;
        c.objective = obj;
        const std::string dir = args.out_dir + "/" + obj;
        if (c.precision == "f32")
          run_train<float>(c, corpus, dir);
        else
          run_train<double>(c, corpus, dir);
        Checkpoint ckpt = Checkpoint::load(dir + "/checkpoint.ckpt");
        auto rep = ckpt_dtype(ckpt) == "f32" ? run_eval<float>(ckpt, corpus)
                                             : run_eval<double>(ckpt, corpus);
        write_json(dir + "/report.json", rep.to_json());
        write_text(dir + "/report.txt", rep.to_table());
        side[obj] = rep.to_json();
        table << "=== " << obj << " ===\n" << rep.to_table() << "\n";
      }
      write_json(args.out_dir + "/compare.json", side);
      write_text(args.out_dir + "/compare.txt", table.str());
      std::cout << table.str();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
