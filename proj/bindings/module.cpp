#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "procgcn/cli.hpp"
#include "procgcn/pipeline.hpp"
#include "procgcn/tuner.hpp"

namespace py = pybind11;
using namespace procgcn;

namespace {

py::object json_to_py(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null: return py::none();
    case nlohmann::json::value_t::boolean: return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer: return py::int_(j.get<long long>());
    case nlohmann::json::value_t::number_unsigned: return py::int_(j.get<unsigned long long>());
    case nlohmann::json::value_t::number_float: return py::float_(j.get<double>());
    case nlohmann::json::value_t::string: return py::str(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      py::list out;
      for (const auto& e : j) out.append(json_to_py(e));
      return out;
    }
    default: {
      py::dict out;
      for (auto it = j.begin(); it != j.end(); ++it)
        out[py::str(it.key())] = json_to_py(it.value());
      return out;
    }
  }
}

nlohmann::json py_to_json(const py::handle& obj) {
  if (obj.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
  if (py::isinstance<py::int_>(obj)) return obj.cast<long long>();
  if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
  if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
  if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : obj) arr.push_back(py_to_json(e));
    return arr;
  }
  if (py::isinstance<py::dict>(obj)) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& item : obj.cast<py::dict>())
      out[item.first.cast<std::string>()] = py_to_json(item.second);
    return out;
  }
  throw py::type_error("unsupported value in hyperparameter dict");
}

py::dict metrics_to_dict(const Metrics& m, const std::vector<std::string>& class_names) {
  py::dict d;
  d["class_names"] = class_names;
  d["accuracy"] = m.accuracy;
  d["macro_f1"] = m.macro_f1;
  d["weighted_f1"] = m.weighted_f1;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["f1"] = m.f1;
  d["support"] = m.support;
  d["confusion"] = m.confusion;
  return d;
}

TrainConfig train_config_from_kwargs(int max_epochs, int patience, double split_fraction,
                                     bool early_stopping) {
  TrainConfig c;
  c.max_epochs = max_epochs;
  c.patience = patience;
  c.split_fraction = split_fraction;
  c.early_stopping = early_stopping;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Self-tuning graph convolutional models for event-log outcome prediction";

  py::register_exception<Error>(m, "ProcgcnError");

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("n_traces", [](const Dataset& d) { return d.traces.size(); })
      .def_property_readonly("class_names", [](const Dataset& d) { return d.class_names; })
      .def("class_counts", &Dataset::class_counts)
      .def("labels",
           [](const Dataset& d) {
             std::vector<int> out;
             for (const auto& t : d.traces) out.push_back(t.label);
             return out;
           })
      .def("to_csv", [](const Dataset& d, const std::string& path,
                        const std::string& label_column) { write_csv(d, path, label_column); },
           py::arg("path"), py::arg("label_column") = "outcome");

  py::class_<PreparedData>(m, "Prepared")
      .def_property_readonly("n_train", [](const PreparedData& p) { return p.train_graphs.size(); })
      .def_property_readonly("n_val", [](const PreparedData& p) { return p.val_graphs.size(); })
      .def_property_readonly("d_node", [](const PreparedData& p) { return p.dims.d_node; })
      .def_property_readonly("d_graph", [](const PreparedData& p) { return p.dims.d_graph; })
      .def_property_readonly("d_pseudo", [](const PreparedData& p) { return p.dims.d_pseudo; });

  m.def("synth_balanced", &synth_balanced, py::arg("n_per_class"), py::arg("n_classes"),
        py::arg("seed"));
  m.def("synth_imbalanced", &synth_imbalanced, py::arg("total"), py::arg("ratios"),
        py::arg("seed"));

  m.def(
      "prepare",
      [](const Dataset& dataset, double split_fraction, std::uint64_t seed,
         std::int64_t t_cut_s, int n_quantile, std::int64_t round_unit_s) {
        PrepareOptions opts;
        opts.split_fraction = split_fraction;
        opts.binning.t_cut_s = t_cut_s;
        opts.binning.n_quantile = n_quantile;
        opts.binning.round_unit_s = round_unit_s;
        return prepare_data(dataset, opts, seed);
      },
      py::arg("dataset"), py::arg("split_fraction") = 0.8, py::arg("seed") = 0,
      py::arg("t_cut_s") = 300, py::arg("n_quantile") = 24, py::arg("round_unit_s") = 60);

  m.def(
      "classification_report",
      [](const std::vector<int>& y_true, const std::vector<int>& y_pred, int n_classes) {
        Metrics mt = classification_report(y_true, y_pred, n_classes);
        py::dict d;
        d["accuracy"] = mt.accuracy;
        d["macro_f1"] = mt.macro_f1;
        d["weighted_f1"] = mt.weighted_f1;
        d["precision"] = mt.precision;
        d["recall"] = mt.recall;
        d["f1"] = mt.f1;
        d["support"] = mt.support;
        d["confusion"] = mt.confusion;
        return d;
      },
      py::arg("y_true"), py::arg("y_pred"), py::arg("n_classes"));

  m.def(
      "sample_hyperparams",
      [](const std::string& arch, const std::string& conv, std::uint64_t seed) {
        Rng rng(seed, "sample");
        HyperParams hp =
            sample_hyperparams(SearchSpace{}, arch_from_string(arch), conv_kind_from_string(conv),
                               rng);
        return json_to_py(hp.to_json());
      },
      py::arg("arch"), py::arg("conv"), py::arg("seed") = 0);

  m.def(
      "train",
      [](const PreparedData& data, const py::dict& hp_dict, int max_epochs, int patience,
         std::uint64_t seed) {
        HyperParams hp = HyperParams::from_json(py_to_json(hp_dict));
        Model model = build_model(hp, data.dims, static_cast<int>(data.class_names.size()),
                                  Rng::mix(seed, "init"));
        TrainResult res =
            train_model(model, data.train_graphs, data.val_graphs,
                        train_config_from_kwargs(max_epochs, patience, 0.8, true),
                        Rng::mix(seed, "train"));
        py::dict out;
        out["best_epoch"] = res.best_epoch;
        out["best_val_loss"] = res.best_val_loss;
        out["val_loss_std"] = res.val_loss_std;
        out["epochs_run"] = res.curve.size();
        out["metrics"] = metrics_to_dict(res.best_metrics, data.class_names);
        return out;
      },
      py::arg("prepared"), py::arg("hp"), py::arg("max_epochs") = 300, py::arg("patience") = 30,
      py::arg("seed") = 0);

  m.def(
      "tune",
      [](const PreparedData& data, const std::string& arch, const std::string& conv, int budget,
         int max_epochs, int patience, int jobs, std::uint64_t seed) {
        TuneConfig tc;
        tc.train = train_config_from_kwargs(max_epochs, patience, 0.8, true);
        tc.jobs = jobs;
        TuneResult res = tune(data, arch_from_string(arch), conv_kind_from_string(conv), budget,
                              tc, seed);
        const Trial& best = res.trials[res.best_index];
        py::dict out;
        out["kind"] = std::string(to_string(res.kind));
        out["best_id"] = best.id;
        out["best_hp"] = json_to_py(best.hp.to_json());
        out["accuracy"] = best.keys.accuracy;
        out["weighted_f1"] = best.keys.weighted_f1;
        out["loss"] = best.keys.loss;
        out["loss_std"] = best.keys.loss_std;
        py::list statuses;
        for (const auto& t : res.trials)
          statuses.append(std::string(t.status == TrialStatus::completed ? "completed"
                                      : t.status == TrialStatus::pruned  ? "pruned"
                                                                         : "failed"));
        out["statuses"] = statuses;
        return out;
      },
      py::arg("prepared"), py::arg("arch"), py::arg("conv"), py::arg("budget") = 10,
      py::arg("max_epochs") = 50, py::arg("patience") = 10, py::arg("jobs") = 1,
      py::arg("seed") = 0);

  m.attr("__version__") = "0.1.0";
}
