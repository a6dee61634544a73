#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tablesvc/harness.hpp"

namespace py = pybind11;
using namespace tablesvc;
using json = nlohmann::json;

namespace {

json parse(const std::string& text) { return text.empty() ? json::object() : json::parse(text); }

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Matrix(0, 0);
  return stack_rows(rows);
}

py::dict report_dict(const MetricsReport& report) {
  return py::module_::import("json").attr("loads")(to_json(report).dump());
}

py::dict selection_dict(const SelectionResult& result) {
  return py::module_::import("json").attr("loads")(to_json(result).dump());
}

std::vector<std::array<int, kServiceClasses>> label_rows(const Dataset& ds) {
  std::vector<std::array<int, kServiceClasses>> out;
  for (const Frame& f : ds.frames) {
    const auto flags = f.label.flags();
    std::array<int, kServiceClasses> row{};
    for (std::size_t c = 0; c < kServiceClasses; ++c) row[c] = flags[c] ? 1 : 0;
    out.push_back(row);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_tablesvc, m) {
  m.doc() = "Bindings for the tablesvc C++ core";

  static py::exception<Error> error(m, "TablesvcError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::class_<Dataset>(m, "Dataset")
      .def("__len__", &Dataset::size)
      .def_property_readonly("label_mode", [](const Dataset& d) { return std::string(to_string(d.manifest.label_mode)); })
      .def_property_readonly("seed_digest", [](const Dataset& d) { return d.manifest.seed_digest; })
      .def_property_readonly("episode_ids",
                             [](const Dataset& d) {
                               std::vector<std::int64_t> ids;
                               for (const Frame& f : d.frames) ids.push_back(f.bundle.episode_id);
                               return ids;
                             })
      .def_property_readonly("labels", &label_rows)
      .def("label_counts", [](const Dataset& d) { return label_counts(d); })
      .def("subset", &subset, py::arg("indices"));

  py::class_<Model>(m, "Model")
      .def_property_readonly("signature", [](const Model& mo) { return mo.signature.describe(); })
      .def_property_readonly("label_mode", [](const Model& mo) { return std::string(to_string(mo.mode)); })
      .def("__eq__", [](const Model& a, const Model& b) { return a == b; });

  m.def("build_benchmark",
        [](const std::string& world, int episodes, std::uint64_t seed) {
          const Benchmark b = build_benchmark(world_config_from_json(parse(world)), episodes, seed);
          return py::make_tuple(b.train, b.test);
        },
        py::arg("world_json"), py::arg("episodes"), py::arg("seed"));
  m.def("world_config", [](const std::string& world) { return to_json(world_config_from_json(parse(world))).dump(); },
        py::arg("world_json"));
  m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
  m.def("load_dataset", &load_dataset, py::arg("path"));
  m.def("split_dataset", &split_dataset, py::arg("dataset"), py::arg("train_fraction"), py::arg("seed"));

  m.def("train",
        [](const Dataset& ds, const std::string& signature, const std::string& config) {
          py::gil_scoped_release release;
          TrainResult r = train(ds, signature_from_json(parse(signature)), train_config_from_json(parse(config)));
          std::vector<std::tuple<int, double, double, double>> history;
          for (const EpochRecord& e : r.history) history.emplace_back(e.epoch, e.learning_rate, e.loss, e.train_macro_f1);
          return std::make_pair(std::move(r.model), std::move(history));
        },
        py::arg("dataset"), py::arg("signature_json"), py::arg("config_json") = "");
  m.def("predict",
        [](const Model& model, const Dataset& ds) {
          const Predictions p = predict(model, ds);
          std::vector<std::array<int, kServiceClasses>> hard;
          for (const ServiceLabel& l : p.labels) {
            const auto flags = l.flags();
            std::array<int, kServiceClasses> row{};
            for (std::size_t c = 0; c < kServiceClasses; ++c) row[c] = flags[c] ? 1 : 0;
            hard.push_back(row);
          }
          return std::make_pair(p.probabilities, hard);
        },
        py::arg("model"), py::arg("dataset"));
  m.def("evaluate", [](const Model& model, const Dataset& ds) { return report_dict(evaluate(model, ds)); },
        py::arg("model"), py::arg("dataset"));
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));

  m.def("average_pool", [](const std::vector<std::vector<double>>& rows) { return average_pool(to_matrix(rows)).vector; },
        py::arg("elements"));
  m.def("max_pool", [](const std::vector<std::vector<double>>& rows) { return max_pool(to_matrix(rows)); },
        py::arg("elements"));
  m.def("simple_attention",
        [](const std::vector<std::vector<double>>& rows, const std::vector<double>& a, double b) {
          const AttentionResult r = simple_attention(to_matrix(rows), {a, b});
          return std::make_pair(r.output, r.weights);
        },
        py::arg("elements"), py::arg("a"), py::arg("b") = 0.0);
  m.def("combine_multitask_loss",
        [](double c, double bb, double a, double prog) { return combine_multitask_loss({c, bb, a, prog}); },
        py::arg("loss_c"), py::arg("loss_bb"), py::arg("loss_a"), py::arg("loss_prog"));

  m.def("roc_auc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) { return roc_auc(scores, labels); },
        py::arg("scores"), py::arg("labels"));
  m.def("f1_from_counts",
        [](std::size_t tp, std::size_t fp, std::size_t fn) {
          ConfusionCounts c;
          c.tp = tp;
          c.fp = fp;
          c.fn = fn;
          return f1_score(c).f1;
        },
        py::arg("tp"), py::arg("fp"), py::arg("fn"));

  m.def("select_random", [](std::size_t n, std::size_t k, std::uint64_t seed) { return selection_dict(select_random(n, k, seed)); },
        py::arg("pool_size"), py::arg("budget"), py::arg("seed"));
  m.def("select_diversity",
        [](const std::vector<std::vector<double>>& rows, std::size_t k) { return selection_dict(select_diversity(to_matrix(rows), k)); },
        py::arg("features"), py::arg("budget"));
  m.def("select_uncertainty",
        [](const std::vector<std::vector<double>>& probs, std::size_t k, const std::string& mode) {
          return selection_dict(select_uncertainty(probs, k, parse_label_mode(mode)));
        },
        py::arg("probabilities"), py::arg("budget"), py::arg("label_mode") = "multi");
  m.def("coverage_radius",
        [](const std::vector<std::vector<double>>& rows, const std::vector<std::size_t>& centers) {
          return coverage_radius(to_matrix(rows), centers);
        },
        py::arg("features"), py::arg("centers"));

  m.def("gradcheck",
        [](std::uint64_t seed) {
          py::gil_scoped_release release;
          const GradcheckSummary s = run_gradcheck(seed);
          return std::make_pair(s.max_rel_error, s.passed);
        },
        py::arg("seed") = 1);
  m.def("run_cli", [](const std::vector<std::string>& args) { return run_cli(args); }, py::arg("args"));
}
