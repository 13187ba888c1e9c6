#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "towerlab/dynamics.hpp"
#include "towerlab/observables.hpp"
#include "towerlab/stats.hpp"
#include "towerlab/tower.hpp"

namespace towerlab {

enum class Centering { EmpiricalMean, Reference };

// Monte Carlo deviation experiment: N trials, each drawing an initial point
// from the (approximate) invariant measure, evaluating the observable on the
// orbit, and recording exceedances over the t grid. Deterministic for a fixed
// master seed regardless of the worker count.
struct DeviationExperiment {
  IntervalMap map;
  Observable obs;
  std::size_t trials = 1000;
  std::vector<double> t_grid;  // strictly increasing; empty = quantile grid
  std::uint64_t master_seed = 1;
  Centering centering = Centering::EmpiricalMean;
  double reference_value = 0.0;
  std::size_t burn_in = 10'000;
  int threads = 1;
};

struct DeviationRow {
  double t = 0;
  double p_hat = 0;
  double wilson_lo = 0;
  double wilson_hi = 0;
};

struct DeviationReport {
  std::vector<double> deviations;  // |K - center| in trial order
  double center = 0;
  std::vector<DeviationRow> rows;
  LinearFit exp_fit;    // log p_hat ~ t^2 over the fit window
  LinearFit poly_fit;   // log p_hat ~ log t over the fit window
  std::size_t fit_window_points = 0;
  std::size_t failures = 0;
};

// Tail-fit window: rows with p_hat in [1e-3, 1e-1] (below is MC noise, above
// is the body of the distribution).
inline constexpr double kFitWindowLow = 1e-3;
inline constexpr double kFitWindowHigh = 1e-1;

DeviationReport run_deviation(const DeviationExperiment& exp);

enum class BoundKind { Exponential, Polynomial, Weak };

// exp: 2 exp(-t^2 / (4C sum Lip^2)); poly/weak: C t^-Q (sum Lip^2)^{Q/2}.
// Clipped at 1.
double bound_curve(BoundKind kind, std::span<const double> lip, double q, double c, double t);

// Weak L^Q seminorm sup_t t P(|Z| > t)^{1/Q} over the sample-induced grid.
double weak_norm(std::vector<double> samples, double q);

struct MomentScan {
  std::vector<std::size_t> n_list;
  std::vector<double> moments;       // E|S_n - mean|^Q estimates
  std::vector<bool> heavy_tail_flag; // top 1% of samples contributes > 25%
  LinearFit slope_fit;               // log moment ~ log n
};

MomentScan moment_scan(const IntervalMap& map, const std::function<double(double)>& f,
                       double lip_f, std::span<const std::size_t> n_list, std::size_t trials,
                       double q, std::uint64_t master_seed, int threads = 1,
                       std::size_t burn_in = 10'000);

// sum_p sup_h (h^{-1} sum_{j=p-h+1}^p lip_j)^2 over the square-summable
// profile, divided by sum lip^2 (Hardy-Littlewood maximal step).
double maximal_function_ratio(std::span<const double> lip, std::size_t p_extra = 1 << 14);

struct TechnicalMcReport {
  double ratio = 0;          // E (sum_r (sum_k L_k Phi_{k-r} o T^r)^2)^{q-1} / (sum L^2)^{q-1}
  double raw_moment = 0;
  double std_error = 0;      // of the raw moment
  std::size_t trials = 0;
};

TechnicalMcReport technical_theorem_mc(const TowerSpec& spec, std::span<const double> weights,
                                       std::size_t trials, int orbit_len,
                                       std::uint64_t master_seed, int threads = 1);

}  // namespace towerlab
