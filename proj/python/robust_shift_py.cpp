// Copyright 2026 The robust-shift Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <vector>

#include "robust_shift/baselines.hpp"
#include "robust_shift/config.hpp"
#include "robust_shift/divergence.hpp"
#include "robust_shift/errors.hpp"
#include "robust_shift/experiment.hpp"
#include "robust_shift/nnr.hpp"
#include "robust_shift/synthdata.hpp"

namespace py = pybind11;
namespace rs = robust_shift;

namespace {

rs::TrainConfig config_from_text(const std::string& text) {
  std::istringstream in(text);
  return rs::parse_config(in);
}

std::vector<int> split_labels(const rs::Dataset& ds, const std::string& split) {
  std::vector<int> out;
  for (const auto& g : ds.split(rs::parse_split(split))) out.push_back(g.label);
  return out;
}

std::vector<bool> split_noisy(const rs::Dataset& ds, const std::string& split) {
  std::vector<bool> out;
  for (const auto& g : ds.split(rs::parse_split(split))) out.push_back(g.noisy);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of robust_shift.";

  py::register_exception<rs::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<rs::ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<rs::DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<rs::ShapeError>(m, "ShapeError", PyExc_ValueError);

  py::class_<rs::TrainConfig>(m, "Config")
      .def(py::init([](const std::string& text) { return config_from_text(text); }),
           py::arg("text") = "")
      .def_static("desk", &rs::desk_preset)
      .def_static("paper", &rs::paper_preset)
      .def("set",
           [](rs::TrainConfig& c, const std::string& key, const std::string& value) {
             rs::apply_setting(c, key, value);
             rs::validate(c);
           })
      .def("entries", &rs::config_entries)
      .def("render", &rs::render_config)
      .def_property_readonly("method",
                             [](const rs::TrainConfig& c) { return rs::method_name(c.method); });

  py::class_<rs::Dataset>(m, "Dataset")
      .def_static("generate", [](const rs::TrainConfig& c) { return rs::generate_dataset(c.data); })
      .def_static("load", &rs::load_dataset)
      .def("save", [](const rs::Dataset& d, const std::string& path) { rs::save_dataset(d, path); })
      .def("serialize", [](const rs::Dataset& d) { return py::bytes(rs::serialize(d)); })
      .def_readonly("num_classes", &rs::Dataset::num_classes)
      .def_readonly("feature_dim", &rs::Dataset::feature_dim)
      .def("__len__", [](const rs::Dataset& d) { return d.instances.size(); })
      .def("labels", &split_labels, py::arg("split") = "train")
      .def("noisy_flags", &split_noisy, py::arg("split") = "train")
      .def("label_counts", [](const rs::Dataset& d, const std::string& split) {
        return d.label_counts(rs::parse_split(split));
      }, py::arg("split") = "train");

  m.def("method_names", [] {
    std::vector<std::string> out;
    for (auto method : rs::all_methods()) out.emplace_back(rs::method_name(method));
    return out;
  });

  m.def("_run_experiment", [](const rs::TrainConfig& c, const rs::Dataset& d) {
    rs::ExperimentResult result;
    {
      py::gil_scoped_release release;
      result = rs::run_experiment(c, d);
    }
    return rs::summary_json(result).dump();
  });
  m.def("_report_json", [](const std::string& dir) { return rs::report_json(dir).dump(); });
  m.def("report_csv", &rs::report_csv);

  m.def("cressie_read_f", &rs::cressie_read_f, py::arg("k"), py::arg("t"));
  m.def("divergence", &rs::divergence, py::arg("q"), py::arg("p"), py::arg("k"));
  m.def("project_simplex", &rs::project_simplex);
  m.def("project_divergence_ball", &rs::project_divergence_ball, py::arg("q"), py::arg("p"),
        py::arg("k"), py::arg("rho"));
  m.def("cvar_loss", [](const std::vector<double>& l, double a) { return rs::cvar_loss(l, a); },
        py::arg("losses"), py::arg("alpha"));
  m.def("chisq_weights",
        [](const std::vector<double>& l, double rho) { return rs::chisq_weights(l, rho); },
        py::arg("losses"), py::arg("rho"));
  m.def(
      "nnr_weights",
      [](const rs::Matrix& embeddings, const std::vector<int>& labels, double gamma,
         const std::string& mode) {
        rs::NnrConfig cfg;
        cfg.gamma = gamma;
        cfg.mode = rs::parse_nnr_mode(mode);
        return rs::nnr_weights(embeddings, labels, cfg);
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("gamma"),
      py::arg("mode") = "neighbor_fraction");
}
