#include "towerlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace towerlab {

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("linear_fit: size mismatch");
  LinearFit fit;
  fit.points = x.size();
  if (x.size() < 2) return fit;
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = (syy == 0.0) ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

Interval wilson_interval(std::size_t successes, std::size_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double p = static_cast<double>(successes) / static_cast<double>(n);
  const double z2 = z * z;
  const double nn = static_cast<double>(n);
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double batch_means_stderr(std::span<const double> v, std::size_t n_batches) {
  if (v.size() < 2 * n_batches || n_batches < 2) return std::sqrt(variance(v) / std::max<std::size_t>(v.size(), 1));
  const std::size_t bs = v.size() / n_batches;
  std::vector<double> bm(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    double s = 0;
    for (std::size_t i = b * bs; i < (b + 1) * bs; ++i) s += v[i];
    bm[b] = s / static_cast<double>(bs);
  }
  return std::sqrt(variance(bm) / static_cast<double>(n_batches));
}

StabilityReport moment_stability(std::span<const double> values, double moment_q,
                                 double window_ratio, double tol) {
  StabilityReport rep;
  if (values.empty()) {
    rep.stable = true;
    return rep;
  }
  const std::size_t horizon = values.size() - 1;  // values[n] indexed by n
  const std::size_t cut = static_cast<std::size_t>(static_cast<double>(horizon) / window_ratio);
  double sum = 0.0, at_cut = 0.0;
  for (std::size_t n = 0; n < values.size(); ++n) {
    sum += std::pow(static_cast<double>(std::max<std::size_t>(n, 1)), moment_q) * values[n];
    if (n == cut) at_cut = sum;
  }
  rep.sum = sum;
  rep.window_sum = at_cut;
  rep.rel_increment = (sum > 0.0) ? (sum - at_cut) / sum : 0.0;
  rep.stable = rep.rel_increment < tol;
  return rep;
}

}  // namespace towerlab
