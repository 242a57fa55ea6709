#include "hombif/cli.hpp"
#include "hombif/matrixcore.hpp"
#include "hombif/parallel.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace hombif;

namespace {

py::dict split_dict(const SpectralSplit& s) {
  py::dict d;
  d["stable_projector"] = s.stable_projector;
  d["unstable_projector"] = s.unstable_projector;
  d["stable_rank"] = s.stable_rank;
  d["gap"] = s.gap;
  d["nodes"] = s.nodes;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Exponential dichotomies, Fredholm indices and index bundles (C++ core)";

  auto base = py::register_exception<Error>(m, "HombifError", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<CertificationError>(m, "CertificationError", base.ptr());
  py::register_exception<IndeterminateError>(m, "IndeterminateError", base.ptr());

  m.def(
      "run",
      [](const std::string& command, const std::string& scenario, std::optional<std::uint64_t> seed,
         std::size_t threads) {
        const auto c = cli::parse_command(command);
        if (!c) throw InputError("unknown command \"" + command + "\"");
        if (threads < 1) throw InputError("threads must be at least 1");
        const auto raw = cli::parse_scenario_text(scenario);
        cli::Outcome out;
        {
          py::gil_scoped_release release;
          set_worker_count(threads);
          out = cli::execute(*c, raw, seed);
        }
        py::dict tables;
        for (const auto& a : out.csv) tables[py::str(a.name)] = a.content;
        return py::make_tuple(out.exit_code, cli::dump(out.report), tables);
      },
      py::arg("command"), py::arg("scenario"), py::arg("seed") = py::none(),
      py::arg("threads") = 1,
      "Runs one command on a JSON scenario; returns (exit code, report JSON, CSV tables).");

  m.def("builtin_scenario_names", &cli::builtin_scenario_names);
  m.def("builtin_scenario", [](const std::string& name) { return cli::builtin_scenario(name).dump(); });

  m.def(
      "spectral_projector",
      [](const Matrix& a, const std::string& method, int nodes) {
        if (method == "contour") return split_dict(spectral_projector_contour(a, nodes));
        if (method == "eigen") return split_dict(spectral_projector_eigen(a));
        throw InputError("method must be \"contour\" or \"eigen\"");
      },
      py::arg("matrix"), py::arg("method") = "contour", py::arg("nodes") = 64,
      "Projectors onto the spectral subspaces inside and outside the unit circle.");

  m.def(
      "is_hyperbolic",
      [](const Matrix& a) {
        const auto h = hombif::is_hyperbolic(a);
        return py::make_tuple(std::string(to_string(h.verdict)), h.gap);
      },
      py::arg("matrix"));

  m.def(
      "autonomous_spectrum",
      [](const Matrix& a, double gamma_min, double gamma_max, int grid_size) {
        SpectrumOptions so;
        so.gamma_min = gamma_min;
        so.gamma_max = gamma_max;
        so.grid_size = grid_size;
        const auto r = dichotomy_spectrum(autonomous_field(a), Parameter{}, so);
        std::vector<std::tuple<double, double, bool>> out;
        for (const auto& iv : r.intervals) out.emplace_back(iv.lower, iv.upper, iv.indeterminate);
        return out;
      },
      py::arg("matrix"), py::arg("gamma_min") = 0.05, py::arg("gamma_max") = 20.0,
      py::arg("grid_size") = 64,
      "Dichotomy spectrum of phi(n+1) = A phi(n) as (lower, upper, indeterminate) intervals.");

  m.def(
      "switched_index",
      [](const Matrix& before, const Matrix& after, long window, long horizon) {
        const auto r = fredholm_index(switched_field(before, after), Parameter{},
                                      TimeWindow{-window, window}, horizon);
        py::dict d;
        d["index"] = r.index;
        d["dim_ker"] = r.dim_ker;
        d["dim_coker"] = r.dim_coker;
        d["consistent"] = r.consistent;
        return d;
      },
      py::arg("before"), py::arg("after"), py::arg("window") = 40, py::arg("horizon") = 100,
      "Fredholm index of phi(n+1) - A_n phi(n) with A_n = before for n < 0 and after from 0 on.");
}
