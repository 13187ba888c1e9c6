#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "towerlab/dynamics.hpp"
#include "towerlab/rng.hpp"
#include "towerlab/stats.hpp"

namespace towerlab {

// Separately Lipschitz function of n orbit coordinates with per-coordinate
// Lipschitz upper bounds.
struct Observable {
  std::size_t arity = 0;
  std::function<double(std::span<const double>)> eval;
  std::vector<double> lip;
  std::string label;
};

// K(x_0..x_{n-1}) = sum f(x_j), Lip_j = Lip(f).
Observable birkhoff(std::function<double(double)> f, double lip_f, std::size_t n,
                    std::string label);

// K = (1/n) sum_{j<n} f(x_j) f(x_{j+lag}), arity n + lag.
Observable empirical_covariance_obs(std::function<double(double)> f, double lip_f,
                                    double sup_f, std::size_t n, std::size_t lag,
                                    std::string label);

struct LipCertification {
  bool passed = true;
  double worst_ratio = 0.0;  // max |dK| / (Lip_j * d)
  std::size_t trials = 0;
};

// Randomized single-coordinate perturbation test of the declared bounds.
LipCertification certify_lipschitz(const Observable& obs, RngStream& rng,
                                   std::size_t trials = 1000);

// Reference autocovariance C_f(l) = int f . f o T^l dmu. Exact quadrature for
// the doubling map; long-orbit average with batch-means errors otherwise.
struct AutocovResult {
  std::vector<double> values;
  std::vector<double> std_errors;  // zero for quadrature
};
AutocovResult autocovariance_reference(const IntervalMap& map,
                                       const std::function<double(double)>& f,
                                       std::size_t lag_max, RngStream& rng,
                                       std::size_t orbit_len = 10'000'000,
                                       std::size_t burn_in = 10'000);

// Nondecreasing piecewise-linear CDF on [0,1] given by knots.
struct PiecewiseLinearCdf {
  std::vector<double> xs;  // strictly increasing, spanning [0,1]
  std::vector<double> ys;  // F(xs), F(0)=0, F(1)=1

  static PiecewiseLinearCdf uniform();
  static PiecewiseLinearCdf from_density(std::span<const double> density);  // uniform grid
  double operator()(double x) const;
  void validate() const;
};

// int_0^1 |F_n - F| ds computed exactly, piecewise between order statistics.
double kantorovich_1d(std::span<const double> sorted_samples, const PiecewiseLinearCdf& ref);

// Exact W1 between two empirical measures (step CDFs, any sizes).
double kantorovich_samples(std::vector<double> a, std::vector<double> b);

// D_n(x) = dist_K(empirical measure of the first n orbit points, ref).
double empirical_measure_dn(const IntervalMap& map, double x0, std::size_t n,
                            const PiecewiseLinearCdf& ref);

// Triangular kernel on [-1,1] and the default bandwidth rule a_n = n^{-1/5}.
struct KernelSpec {
  std::function<double(double)> psi = [](double u) {
    const double a = std::abs(u);
    return a >= 1.0 ? 0.0 : 1.0 - a;
  };
  double support = 1.0;
  std::function<double(std::size_t)> bandwidth_rule = [](std::size_t n) {
    return std::pow(static_cast<double>(n), -0.2);
  };
};

// h_n(s) = (1/(n a_n)) sum_j psi((s - x_j)/a_n) on a uniform grid.
std::vector<double> kde_estimate(std::span<const double> points, std::size_t grid,
                                 double bandwidth, const KernelSpec& kspec = {});

// Integral modulus int_t^1 |h(s) - h(s-t)| ds per t (interior overlap only,
// so a constant density scores 0), plus the fitted exponent when defined.
struct BesovModulus {
  std::vector<double> moduli;
  std::optional<double> fitted_exponent;
};
BesovModulus besov_modulus(std::span<const double> density, std::span<const double> t_list);

// Closed-form lag evaluation of int_0^omega |sum_j e^{-ijs} f_j|^2 / n ds.
double integrated_periodogram(std::span<const double> f, double omega,
                              std::size_t lag_cap = 0 /* 0 = n-1 */);

// J(omega) = C_0 omega + 2 sum sin(omega l) C_l / l, with the reported tail
// bound 2 sum_{l > lag_max} |C_l| / l over the available window.
struct PeriodogramLimit {
  double value = 0.0;
  double tail_bound = 0.0;
};
PeriodogramLimit periodogram_limit(std::span<const double> autocov, double omega,
                                   std::size_t lag_max);

// max over omega_p = 2 pi p / N of |J_n(omega_p) - J(omega_p)| plus the
// discretization term C/N that the omega-grid argument pays.
struct SupPeriodogramGap {
  double gap = 0.0;
  double grid_term = 0.0;
  std::size_t grid = 0;
};
SupPeriodogramGap sup_periodogram_gap(std::span<const double> f,
                                      std::span<const double> autocov, std::size_t grid_n);

// Pool-minimized tracing statistics: average distance and mismatch fraction
// of the best shadowing orbit from the candidate pool.
struct TracingStats {
  double s_mean_dist = 0.0;
  double m_mismatch = 0.0;
  std::size_t pool = 0;
};
TracingStats tracing_stats(std::span<const double> orbit,
                           const std::vector<std::vector<double>>& pool, double eps);

}  // namespace towerlab
