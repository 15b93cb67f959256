// Python bindings. Structured values cross the boundary as JSON text; the
// package wrapper converts to and from dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cdekit/config.hpp"
#include "cdekit/error.hpp"
#include "cdekit/runner.hpp"
#include "cdekit/toml_lite.hpp"

namespace py = pybind11;
using namespace cdekit;

namespace {

template <class T, class F>
T parse_or_throw(const std::string& text, const std::string& path, F&& from_json) {
  Diagnostics diag;
  T value = from_json(Json::parse(text), path, diag);
  diag.raise();
  return value;
}

Json finite_text(Json j) {
  if (j.is_number_float()) return number_json(j.get<double>());
  if (j.is_structured())
    for (auto& v : j) v = finite_text(std::move(v));
  return j;
}

std::string divergence(const std::string& p, const std::string& q, const std::string& reference, bool force_numeric) {
  DivergenceConfig cfg;
  cfg.p = parse_or_throw<ResponseDensity>(p, "p", density_from_json);
  cfg.q = parse_or_throw<ResponseDensity>(q, "q", density_from_json);
  cfg.reference = parse_or_throw<ReferenceMeasure>(reference, "reference", reference_from_json);
  cfg.options.force_numeric = force_numeric;
  return divergence_report(cfg).dump();
}

std::vector<std::string> run(const std::string& doc, const std::string& out_dir) {
  RunOptions opt;
  opt.out_dir = resolve_output_dir(out_dir);
  ExperimentConfig cfg = parse_config(Json::parse(doc));
  RunResult res;
  {
    py::gil_scoped_release release;
    res = run_experiment(std::move(cfg), opt);
  }
  std::vector<std::string> files;
  for (const auto& f : res.files) files.push_back(f.string());
  return files;
}

std::string classes() {
  Json a = Json::array();
  for (const auto& c : list_classes()) a.push_back({{"name", c.name}, {"summary", c.summary}, {"parameters", c.parameters}});
  return a.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Conditional density estimation experiments";

  // Later registrations are tried first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigurationError>(m, "ConfigurationError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("divergence", &divergence, py::arg("p"), py::arg("q"), py::arg("reference"), py::arg("force_numeric") = false);
  m.def("validate_config", [](const std::string& doc) { return validate_config(Json::parse(doc)); }, py::arg("doc"));
  m.def("run_config", &run, py::arg("doc"), py::arg("out_dir") = "");
  m.def("list_classes", &classes);
  m.def("risk_csv_columns", [] { return risk_csv_columns(); });
  m.def(
      "rate_fit",
      [](const std::vector<double>& n, const std::vector<double>& risks, bool burn_in) {
        return rate_fit_json(rate_fit(n, risks, burn_in)).dump();
      },
      py::arg("n"), py::arg("risks"), py::arg("burn_in") = true);
  m.def("parse_toml", [](const std::string& text) { return finite_text(parse_toml(text)).dump(); }, py::arg("text"));
}
