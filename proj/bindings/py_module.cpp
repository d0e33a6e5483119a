#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ocvit/errors.hpp"
#include "ocvit/evalproto.hpp"
#include "ocvit/experiment.hpp"

namespace py = pybind11;

namespace {

py::dict evaluate(const std::string& config_text, const std::string& base_dir) {
  ocvit::ExperimentConfig cfg =
      ocvit::parse_config_text(config_text, base_dir);
  ocvit::Dataset data = ocvit::load_dataset(cfg);
  std::vector<ocvit::SplitSpec> splits = ocvit::make_splits(cfg, data);
  std::map<int, std::vector<double>> per_class;
  for (const ocvit::SplitSpec& split : splits) {
    for (std::uint64_t seed : cfg.seeds) {
      ocvit::SplitRunResult r = ocvit::run_split(cfg, data, split, seed);
      per_class[split.normal_class].push_back(r.auc);
    }
  }
  ocvit::EvalReport rep = ocvit::aggregate(per_class);
  py::dict out;
  out["mean"] = rep.mean;
  out["stddev"] = rep.stddev;
  out["per_class"] = rep.per_class;
  out["seeds"] = cfg.seeds;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "One-class ViT anomaly detection core";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ocvit::ConfigError>(m, "ConfigError",
                                             PyExc_ValueError);
  py::register_exception<ocvit::EvalError>(m, "EvalError", PyExc_ValueError);
  py::register_exception<ocvit::IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "auc_roc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return ocvit::auc_roc(scores, labels);
      },
      py::arg("scores"), py::arg("labels"),
      "Mann-Whitney AUC-ROC; labels are 1 for anomalous, 0 for normal.");

  m.def(
      "canonical_config",
      [](const std::string& text, const std::string& base_dir) {
        return ocvit::parse_config_text(text, base_dir).to_text();
      },
      py::arg("text"), py::arg("base_dir") = "",
      "Parses key=value config text and returns the canonical full form.");

  m.def(
      "gradient_suite",
      [](std::uint64_t seed) {
        std::vector<std::tuple<std::string, double, bool>> out;
        for (const ocvit::GradSuiteCase& c : ocvit::run_gradient_suite(seed)) {
          out.emplace_back(c.name, c.report.max_rel_err, c.report.pass);
        }
        return out;
      },
      py::arg("seed") = 1,
      "Runs the finite-difference gradient suite; returns "
      "(name, max_rel_err, pass) per op.");

  m.def("evaluate", &evaluate, py::arg("config_text"), py::arg("base_dir") = "",
        "Trains and scores every split x seed in-process; returns the "
        "aggregate report as a dict.");
}
