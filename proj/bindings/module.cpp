#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "viood/run.hpp"

namespace py = pybind11;
using namespace viood;

namespace {

nlohmann::json to_json(const py::handle& obj) {
  if (obj.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
  if (py::isinstance<py::int_>(obj)) return obj.cast<long long>();
  if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
  if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
  if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& item : obj) arr.push_back(to_json(item));
    return arr;
  }
  if (py::isinstance<py::dict>(obj)) {
    nlohmann::json o = nlohmann::json::object();
    for (const auto& item : obj.cast<py::dict>())
      o[item.first.cast<std::string>()] = to_json(item.second);
    return o;
  }
  throw py::type_error("unsupported config value type");
}

py::object to_py(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null:
      return py::none();
    case nlohmann::json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer:
      return py::int_(j.get<long long>());
    case nlohmann::json::value_t::number_unsigned:
      return py::int_(j.get<unsigned long long>());
    case nlohmann::json::value_t::number_float:
      return py::float_(j.get<double>());
    case nlohmann::json::value_t::string:
      return py::str(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(to_py(item));
      return out;
    }
    default: {
      py::dict out;
      for (auto it = j.begin(); it != j.end(); ++it)
        out[py::str(it.key())] = to_py(it.value());
      return out;
    }
  }
}

std::vector<double> flatten(const std::vector<std::vector<double>>& rows, int& dim) {
  if (rows.empty()) throw FitError("need at least one row");
  dim = static_cast<int>(rows[0].size());
  std::vector<double> flat;
  flat.reserve(rows.size() * rows[0].size());
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != dim) throw FitError("ragged latent rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return flat;
}

template <typename T>
py::dict run_training(const io::RunConfig& cfg, const io::Corpus& corpus,
                      const std::string& checkpoint_path) {
  run::Pipeline<T> model(cfg, corpus);
  auto log = model.train();
  auto rep = model.evaluate();
  if (!checkpoint_path.empty()) model.to_checkpoint().save(checkpoint_path);
  py::dict out;
  out["report"] = to_py(rep.to_json());
  out["train_log"] = to_py(log.to_json());
  out["s_weights"] = py::cast(cfg.objective == "joint" ? model.combination_weights()
                                                       : std::vector<double>{});
  return out;
}

py::dict train(const py::dict& config, const std::string& checkpoint_path) {
  auto cfg = io::RunConfig::from_json(to_json(config));
  auto corpus = io::load_dataset(cfg.data);
  if (cfg.precision == "f64") return run_training<double>(cfg, corpus, checkpoint_path);
  return run_training<float>(cfg, corpus, checkpoint_path);
}

template <typename T>
py::object run_eval(const io::Checkpoint& ckpt, const io::Corpus& corpus, bool probe) {
  auto model = run::Pipeline<T>::from_checkpoint(ckpt, corpus);
  if (probe) return to_py(model.probe_layers().to_json());
  return to_py(model.evaluate().to_json());
}

py::object eval_checkpoint(const std::string& path, bool probe) {
  auto ckpt = io::Checkpoint::load(path);
  auto cfg = io::RunConfig::from_json(ckpt.header["config"]);
  auto corpus = io::load_dataset(cfg.data);
  if (cfg.precision == "f64") return run_eval<double>(ckpt, corpus, probe);
  return run_eval<float>(ckpt, corpus, probe);
}

}  // namespace

PYBIND11_MODULE(_viood, m) {
  m.doc() = "Variational-latent OOD detection toolkit";

  py::register_exception<Error>(m, "VioodError");

  // metrics
  m.def("auroc", [](std::vector<double> id, std::vector<double> ood) {
    return eval::auroc({std::move(id), std::move(ood)});
  }, py::arg("id_scores"), py::arg("ood_scores"));
  m.def("far_at_95", [](std::vector<double> id, std::vector<double> ood, double tpr) {
    return eval::far_at_95({std::move(id), std::move(ood)}, tpr);
  }, py::arg("id_scores"), py::arg("ood_scores"), py::arg("tpr") = 0.95);
  m.def("aupr", [](std::vector<double> id, std::vector<double> ood) {
    return eval::aupr({std::move(id), std::move(ood)});
  }, py::arg("id_scores"), py::arg("ood_scores"));
  m.def("id_accuracy", &eval::id_accuracy, py::arg("logits"), py::arg("labels"));

  // scoring
  py::class_<ood::GaussianBank>(m, "GaussianBank")
      .def_readonly("k_classes", &ood::GaussianBank::k_classes)
      .def_readonly("dim", &ood::GaussianBank::dim)
      .def_readonly("shrinkage_eps", &ood::GaussianBank::shrinkage_eps);
  py::class_<ood::ValidationBank>(m, "ValidationBank")
      .def_readonly("dim", &ood::ValidationBank::dim)
      .def_readonly("count", &ood::ValidationBank::count);
  m.def("fit_gaussian_bank",
        [](const std::vector<std::vector<double>>& latents, const std::vector<int>& labels,
           int k_classes) {
          int dim = 0;
          auto flat = flatten(latents, dim);
          return ood::fit_gaussian_bank(flat, dim, labels, k_classes);
        },
        py::arg("latents"), py::arg("labels"), py::arg("k_classes"));
  m.def("build_validation_bank",
        [](const std::vector<std::vector<double>>& latents, std::size_t max_size,
           std::uint64_t seed) {
          int dim = 0;
          auto flat = flatten(latents, dim);
          return ood::build_validation_bank(flat, dim, max_size, seed);
        },
        py::arg("latents"), py::arg("max_size") = 5000, py::arg("seed") = 0);
  m.def("maha_score", &ood::maha_score, py::arg("z"), py::arg("bank"));
  m.def("msp_score", &ood::msp_score, py::arg("logits"));
  m.def("energy_score", &ood::energy_score, py::arg("logits"));
  m.def("cosine_score", &ood::cosine_score, py::arg("z"), py::arg("bank"));

  // variational pieces
  m.def("kl_diag", &vi::kl_diag, py::arg("mu"), py::arg("log_var"));
  m.def("anneal_beta", &vi::anneal_beta, py::arg("step"), py::arg("total_steps"),
        py::arg("anneal_fraction") = 0.5);

  // harness
  m.def("make_synthetic",
        [](const std::string& dir, std::uint64_t seed, int n_train, int n_val, int n_test,
           int n_ood) {
          auto spec = io::make_synthetic(dir, seed, n_train, n_val, n_test, n_ood);
          py::dict out;
          out["id_train"] = spec.id_train;
          out["id_val"] = spec.id_val;
          out["id_test"] = spec.id_test;
          out["ood_test"] = py::cast(spec.ood_test);
          return out;
        },
        py::arg("dir"), py::arg("seed") = 0, py::arg("n_train") = 2000, py::arg("n_val") = 500,
        py::arg("n_test") = 500, py::arg("n_ood") = 500);
  m.def("train", &train, py::arg("config"), py::arg("checkpoint_path") = std::string(),
        "Train, evaluate and optionally checkpoint one model; returns report and log.");
  m.def("evaluate", [](const std::string& path) { return eval_checkpoint(path, false); },
        py::arg("checkpoint_path"));
  m.def("probe_layers", [](const std::string& path) { return eval_checkpoint(path, true); },
        py::arg("checkpoint_path"));
}
