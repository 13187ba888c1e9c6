#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace towerlab {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

// Ordinary least squares y ~ intercept + slope * x.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Wilson score interval for a binomial proportion (z = 1.96 by default).
Interval wilson_interval(std::size_t successes, std::size_t n, double z = 1.96);

double mean(std::span<const double> v);
double variance(std::span<const double> v);  // unbiased

// Standard error of an orbit average estimated by batch means.
double batch_means_stderr(std::span<const double> v, std::size_t n_batches = 32);

// Stability of the weighted partial sums S_N = sum_{n<=N} n^Q v_n over the
// trailing window [N/window_ratio, N]: stable when the window's relative
// increment is below tol. This is the acceptance criterion attached to every
// claimed moment order in this project.
struct StabilityReport {
  double sum = 0.0;            // S at the horizon
  double window_sum = 0.0;     // S at horizon/window_ratio
  double rel_increment = 0.0;  // (sum - window_sum) / sum
  bool stable = false;
};

StabilityReport moment_stability(std::span<const double> values, double moment_q,
                                 double window_ratio = 10.0, double tol = 0.01);

}  // namespace towerlab
