#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>

#include "towerlab/concentration.hpp"
#include "towerlab/martingale.hpp"
#include "towerlab/dynamics.hpp"
#include "towerlab/observables.hpp"
#include "towerlab/seqcalc.hpp"
#include "towerlab/tower.hpp"
#include "towerlab/transfer.hpp"

namespace py = pybind11;
using namespace towerlab;

namespace {

IntervalMap make_map(const std::string& kind, double alpha) {
  if (kind == "doubling") return DoublingMap{};
  if (kind == "intermittent") return IntermittentMap(alpha);
  throw std::invalid_argument("unknown map kind: " + kind);
}

TailModel make_tail(const std::string& kind, double param) {
  TailModel tail;
  if (kind == "exponential") tail.kind = TailKind::Exponential;
  else if (kind == "polynomial") tail.kind = TailKind::Polynomial;
  else if (kind == "weak_polynomial") tail.kind = TailKind::WeakPolynomial;
  else throw std::invalid_argument("unknown tail kind: " + kind);
  tail.param = param;
  tail.validate();
  return tail;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Young-tower concentration laboratory (core bindings)";

  m.def("intermittent_step",
        [](double x, double alpha) { return IntermittentMap(alpha).step(x); },
        py::arg("x"), py::arg("alpha"));
  m.def("doubling_step", [](double x) { return DoublingMap{}.step(x); }, py::arg("x"));

  m.def("generate_orbit",
        [](const std::string& kind, double alpha, double x0, std::size_t n) {
          return generate_orbit(make_map(kind, alpha), x0, n);
        },
        py::arg("kind"), py::arg("alpha"), py::arg("x0"), py::arg("n"));

  m.def("stationary_orbit",
        [](const std::string& kind, double alpha, std::uint64_t seed, std::size_t n,
           std::size_t burn_in) {
          RngStream rng(seed);
          return sample_stationary_orbit(make_map(kind, alpha), rng, n, burn_in);
        },
        py::arg("kind"), py::arg("alpha"), py::arg("seed"), py::arg("n"),
        py::arg("burn_in") = 10000);

  m.def("first_return_time",
        [](double alpha, double x) { return first_return_time(IntermittentMap(alpha), x); },
        py::arg("alpha"), py::arg("x"));

  m.def("return_time_tail_exponent",
        [](double alpha, std::size_t samples, std::uint64_t seed) {
          const auto fit = return_time_tail_exponent(IntermittentMap(alpha), samples, seed);
          py::dict d;
          d["exponent"] = fit.exponent;
          d["points"] = fit.points;
          d["deepest_n"] = fit.deepest_n;
          return d;
        },
        py::arg("alpha"), py::arg("samples"), py::arg("seed"));

  py::class_<TowerSpec>(m, "Tower")
      .def(py::init([](const std::string& tail, double param, int cells, std::uint64_t seed) {
             return build_tower(make_tail(tail, param), cells, seed);
           }),
           py::arg("tail"), py::arg("param"), py::arg("cells"), py::arg("seed") = 0)
      .def_static("from_json", &tower_from_json)
      .def("to_json", &tower_to_json)
      .def_property_readonly("cells", &TowerSpec::n_cells)
      .def_property_readonly("beta", [](const TowerSpec& s) { return s.beta; })
      .def_property_readonly("rho", [](const TowerSpec& s) { return s.rho; })
      .def("check_decomposition",
           [](const TowerSpec& spec, int n) { return check_decomposition(spec, n); },
           py::arg("n"))
      .def("psi_integral",
           [](const TowerSpec& spec, int n) {
             const auto r = first_return_ops(spec, spec.max_return_time());
             const auto u = renewal_U(r, spec, spec.rho, n);
             return full_psi_integral(spec, u, n);
           },
           py::arg("n"))
      .def("phi_integral",
           [](const TowerSpec& spec, int m) {
             return phi_operator_estimates(spec, m, 1).integral_operator.back();
           },
           py::arg("m"))
      .def("decay_norms", [](const TowerSpec& spec, int n_max) {
        const auto diag = decay_diagnostics(spec, n_max);
        py::dict d;
        d["t_minus_pi"] = diag.norm_t_minus_pi;
        d["t_diff"] = diag.norm_t_diff;
        d["log_fit_slope"] = diag.log_norm_fit.slope;
        d["log_fit_r2"] = diag.log_norm_fit.r2;
        return d;
      }, py::arg("n_max"));

  m.def("convolve",
        [](std::vector<double> u, double qu, std::vector<double> v, double qv) {
          return convolve(MomentSeq{std::move(u), qu}, MomentSeq{std::move(v), qv}).values;
        },
        py::arg("u"), py::arg("qu"), py::arg("v"), py::arg("qv"));
  m.def("tail_sum",
        [](std::vector<double> c, double q) {
          return tail_sum(MomentSeq{std::move(c), q}).values;
        },
        py::arg("c"), py::arg("q"));

  m.def("kantorovich_uniform",
        [](std::vector<double> samples) {
          std::sort(samples.begin(), samples.end());
          return kantorovich_1d(samples, PiecewiseLinearCdf::uniform());
        },
        py::arg("samples"));
  m.def("kantorovich_samples", &kantorovich_samples, py::arg("a"), py::arg("b"));

  m.def("integrated_periodogram",
        [](std::vector<double> f, double omega) { return integrated_periodogram(f, omega); },
        py::arg("f"), py::arg("omega"));
  m.def("periodogram_limit",
        [](std::vector<double> autocov, double omega, std::size_t lag_max) {
          return periodogram_limit(autocov, omega, lag_max).value;
        },
        py::arg("autocov"), py::arg("omega"), py::arg("lag_max"));

  m.def("weak_norm", &weak_norm, py::arg("samples"), py::arg("q"));
  m.def("maximal_function_ratio",
        [](std::vector<double> lip) { return maximal_function_ratio(lip); },
        py::arg("lip"));
  m.def("bound_curve",
        [](const std::string& kind, std::vector<double> lip, double q, double c, double t) {
          const BoundKind bk = kind == "exp"    ? BoundKind::Exponential
                               : kind == "poly" ? BoundKind::Polynomial
                                                : BoundKind::Weak;
          return bound_curve(bk, lip, q, c, t);
        },
        py::arg("kind"), py::arg("lip"), py::arg("q"), py::arg("c"), py::arg("t"));

  m.def("ulam_density",
        [](const std::string& kind, double alpha, int grid) {
          return ulam_build(make_map(kind, alpha), grid).density;
        },
        py::arg("kind"), py::arg("alpha"), py::arg("grid"));

  m.def("hoeffding_azuma_ratio",
        [](std::size_t arity, std::size_t batch, std::uint64_t seed) {
          ExactShiftContext ctx;
          ctx.shift = ShiftSystem::bernoulli({0.5, 0.5});
          RngStream rng(seed);
          std::vector<WordObservable> obs;
          for (std::size_t i = 0; i < batch; ++i)
            obs.push_back(random_word_observable(ctx.shift, arity, rng));
          const auto rep = check_hoeffding_azuma(ctx, obs);
          py::dict d;
          d["worst_ratio"] = rep.worst_ratio;
          d["passed"] = rep.passed;
          return d;
        },
        py::arg("arity"), py::arg("batch"), py::arg("seed"));

  m.def("deviation_fits",
        [](const std::string& kind, double alpha, std::size_t n, std::size_t trials,
           std::uint64_t seed, int threads) {
          DeviationExperiment exp;
          exp.map = make_map(kind, alpha);
          exp.obs = birkhoff([](double x) { return std::cos(2 * M_PI * x); }, 2 * M_PI, n,
                             "cos2pi");
          exp.trials = trials;
          exp.master_seed = seed;
          exp.threads = threads;
          const auto rep = run_deviation(exp);
          py::dict d;
          d["exp_slope"] = rep.exp_fit.slope;
          d["exp_r2"] = rep.exp_fit.r2;
          d["poly_slope"] = rep.poly_fit.slope;
          d["poly_r2"] = rep.poly_fit.r2;
          d["center"] = rep.center;
          d["window_points"] = rep.fit_window_points;
          return d;
        },
        py::arg("kind"), py::arg("alpha"), py::arg("n"), py::arg("trials"), py::arg("seed"),
        py::arg("threads") = 1);
}
