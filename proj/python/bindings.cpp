#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "hbiuq/cli.hpp"
#include "hbiuq/config.hpp"
#include "hbiuq/engine.hpp"
#include "hbiuq/error.hpp"
#include "hbiuq/sampler.hpp"
#include "hbiuq/sensitivity.hpp"
#include "hbiuq/surrogate.hpp"

namespace py = pybind11;
using namespace hbiuq;

namespace {

std::vector<Bounds> to_bounds(const std::vector<std::pair<double, double>>& b) {
  std::vector<Bounds> out;
  out.reserve(b.size());
  for (const auto& [lo, hi] : b) out.push_back({lo, hi});
  return out;
}

// Wraps a Python callable x -> float | sequence as a library VectorFunction.
VectorFunction wrap(py::function f) {
  return [f = std::move(f)](std::span<const double> x) -> Eigen::VectorXd {
    py::gil_scoped_acquire gil;
    Eigen::VectorXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    py::object r = f(in);
    if (py::isinstance<py::float_>(r) || py::isinstance<py::int_>(r)) {
      return Eigen::VectorXd::Constant(1, r.cast<double>());
    }
    return r.cast<Eigen::VectorXd>();
  };
}

py::dict summary_dict(const ParameterSummary& p) {
  py::dict d;
  d["mean"] = p.mean;
  d["sd"] = p.sd;
  d["q2.5"] = p.q025;
  d["q50"] = p.q50;
  d["q97.5"] = p.q975;
  d["rhat"] = p.rhat ? py::object(py::float_(*p.rhat)) : py::none();
  d["ess_bulk"] = p.ess_bulk;
  return d;
}

}  // namespace

PYBIND11_MODULE(_hbiuq, m) {
  m.doc() = "Hierarchical Bayesian inverse uncertainty quantification";
  m.attr("__version__") = HBIUQ_VERSION;

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<ZeroVarianceError>(m, "ZeroVarianceError", base.ptr());

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        std::vector<const char*> argv{"hbiuq"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit code, stdout, stderr).");

  m.def(
      "lhs_sample",
      [](std::size_t n, const std::vector<std::pair<double, double>>& bounds, std::uint64_t seed) {
        Rng rng(seed);
        const auto b = to_bounds(bounds);
        return lhs_sample(n, b, rng).points;
      },
      py::arg("n"), py::arg("bounds"), py::arg("seed"));

  py::class_<PolySurrogate>(m, "PolySurrogate")
      .def_property_readonly("degree", &PolySurrogate::degree)
      .def("predict", [](const PolySurrogate& s, const Eigen::VectorXd& x) {
        return s.predict(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
      })
      .def("gradient", [](const PolySurrogate& s, const Eigen::VectorXd& x) {
        return s.gradient(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
      });
  m.def("fit_poly", &fit_poly, py::arg("inputs"), py::arg("outputs"), py::arg("degree"));

  py::class_<GpSurrogate>(m, "GpSurrogate")
      .def("predict_mean",
           [](const GpSurrogate& s, const Eigen::VectorXd& x, std::size_t output) {
             return s.predict_mean(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), output);
           },
           py::arg("x"), py::arg("output") = 0)
      .def("predict_variance",
           [](const GpSurrogate& s, const Eigen::VectorXd& x, std::size_t output) {
             return s.predict_variance(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                                       output);
           },
           py::arg("x"), py::arg("output") = 0)
      .def("mean_gradient", [](const GpSurrogate& s, const Eigen::VectorXd& x) {
        return s.mean_gradient(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
      });
  m.def(
      "fit_gp",
      [](const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& outputs, std::uint64_t seed) {
        GpOptions opt;
        opt.seed = seed;
        return fit_gp(inputs, outputs, opt);
      },
      py::arg("inputs"), py::arg("outputs"), py::arg("seed") = 0);

  m.def(
      "oat_screen",
      [](py::function f, const std::vector<std::pair<double, double>>& bounds, std::size_t n, double threshold,
         std::uint64_t seed, std::vector<double> nominal, std::vector<std::string> names) {
        Rng rng(seed);
        const auto b = to_bounds(bounds);
        const auto r = oat_screen(wrap(std::move(f)), b, nominal, n, threshold, rng, std::move(names));
        py::dict d;
        d["names"] = r.names;
        d["variance"] = r.variance;
        d["selected"] = std::vector<bool>(r.selected.begin(), r.selected.end());
        d["threshold"] = r.threshold;
        return d;
      },
      py::arg("f"), py::arg("bounds"), py::arg("n") = 50, py::arg("threshold") = 1e-3, py::arg("seed") = 0,
      py::arg("nominal") = std::vector<double>{}, py::arg("names") = std::vector<std::string>{});

  m.def(
      "sobol_indices",
      [](py::function f, const std::vector<std::pair<double, double>>& bounds, std::size_t n, std::uint64_t seed,
         std::size_t bootstrap, std::vector<std::string> names) {
        Rng rng(seed);
        const auto b = to_bounds(bounds);
        const auto r = sobol_indices(wrap(std::move(f)), b, n, rng, bootstrap, std::move(names));
        py::dict d;
        d["names"] = r.names;
        d["n"] = r.n;
        d["evaluations"] = r.evaluations;
        d["S1"] = r.s1;
        d["ST"] = r.st;
        d["S1_se"] = r.s1_se;
        d["ST_se"] = r.st_se;
        std::vector<std::string> ranking;
        for (std::size_t i : rank_and_select(r)) ranking.push_back(r.names[i]);
        d["ranking"] = ranking;
        return d;
      },
      py::arg("f"), py::arg("bounds"), py::arg("n") = 4096, py::arg("seed") = 0, py::arg("bootstrap") = 200,
      py::arg("names") = std::vector<std::string>{});

  m.def("split_rhat", &split_rhat, py::arg("chains"));
  m.def("bulk_ess", &bulk_ess, py::arg("chains"));

  m.def(
      "toy_calibration",
      [](std::uint64_t seed, std::size_t groups, std::size_t per_group, std::size_t draws_per_chain,
         std::size_t chains, std::size_t burn_in) {
        ToyOptions opt;
        opt.groups = groups;
        opt.per_group = per_group;
        Rng rng = Rng::for_stream(seed, 100);
        CalibrationResult res;
        {
          py::gil_scoped_release release;
          const ToyData data = generate_toy_data(opt, rng);
          const RunConfig cfg = toy_config(seed, draws_per_chain, chains, burn_in);
          res = run_hierarchical(cfg.problem, data.observations);
        }
        py::dict out;
        for (const auto& p : res.diagnostics.parameters) out[py::str(p.name)] = summary_dict(p);
        return out;
      },
      py::arg("seed") = 7, py::arg("groups") = 20, py::arg("per_group") = 5, py::arg("draws_per_chain") = 1000,
      py::arg("chains") = 4, py::arg("burn_in") = 1000,
      "Generates toy data and runs the hierarchical calibration; returns hyperparameter summaries.");
}
