#include "towerlab/concentration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace towerlab {

DeviationReport run_deviation(const DeviationExperiment& exp) {
  if (exp.trials < 2) throw std::invalid_argument("deviation experiment needs trials >= 2");
  for (std::size_t i = 1; i < exp.t_grid.size(); ++i)
    if (exp.t_grid[i] <= exp.t_grid[i - 1])
      throw std::invalid_argument("t grid must be strictly increasing");

  std::vector<double> values(exp.trials);
  std::vector<char> failed(exp.trials, 0);
  run_indexed_tasks(exp.trials, exp.threads, [&](std::size_t i) {
    RngStream rng = RngStream::substream(exp.master_seed, i);
    try {
      const auto orbit = sample_stationary_orbit(exp.map, rng, exp.obs.arity, exp.burn_in);
      values[i] = exp.obs.eval(orbit);
    } catch (const std::exception&) {
      failed[i] = 1;
      values[i] = 0.0;
    }
  });

  DeviationReport rep;
  for (char f : failed) rep.failures += f;
  if (rep.failures * 100 > exp.trials)
    throw std::runtime_error("more than 1% of trials failed");

  double center = exp.reference_value;
  if (exp.centering == Centering::EmpiricalMean) {
    double s = 0;
    std::size_t good = 0;
    for (std::size_t i = 0; i < exp.trials; ++i)
      if (!failed[i]) {
        s += values[i];
        ++good;
      }
    center = s / static_cast<double>(good);
  }
  rep.center = center;

  rep.deviations.reserve(exp.trials);
  for (std::size_t i = 0; i < exp.trials; ++i)
    if (!failed[i]) rep.deviations.push_back(std::abs(values[i] - center));

  std::vector<double> grid = exp.t_grid;
  if (grid.empty()) {
    // Deterministic quantile grid spanning the useful exceedance range.
    std::vector<double> sorted = rep.deviations;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    for (double p : {0.5, 0.3, 0.2, 0.1, 0.07, 0.05, 0.03, 0.02, 0.015,
                     0.01, 0.007, 0.005, 0.003, 0.002, 0.001}) {
      const auto idx = static_cast<std::size_t>((1.0 - p) * static_cast<double>(n));
      const double t = sorted[std::min(idx, n - 1)];
      if (t > 0 && (grid.empty() || t > grid.back())) grid.push_back(t);
    }
  }

  std::vector<double> fit_x2, fit_logt, fit_logp;
  for (double t : grid) {
    std::size_t exceed = 0;
    for (double d : rep.deviations) exceed += (d > t);
    DeviationRow row;
    row.t = t;
    row.p_hat = static_cast<double>(exceed) / static_cast<double>(rep.deviations.size());
    const Interval iv = wilson_interval(exceed, rep.deviations.size());
    row.wilson_lo = iv.lo;
    row.wilson_hi = iv.hi;
    rep.rows.push_back(row);
    if (row.p_hat >= kFitWindowLow && row.p_hat <= kFitWindowHigh) {
      fit_x2.push_back(t * t);
      fit_logt.push_back(std::log(t));
      fit_logp.push_back(std::log(row.p_hat));
    }
  }
  rep.fit_window_points = fit_logp.size();
  if (fit_logp.size() >= 2) {
    rep.exp_fit = linear_fit(fit_x2, fit_logp);
    rep.poly_fit = linear_fit(fit_logt, fit_logp);
  }
  return rep;
}

double bound_curve(BoundKind kind, std::span<const double> lip, double q, double c, double t) {
  if (c <= 0) throw std::invalid_argument("bound_curve needs C > 0");
  double lip2 = 0;
  for (double l : lip) lip2 += l * l;
  double value;
  if (kind == BoundKind::Exponential) {
    value = lip2 > 0 ? 2.0 * std::exp(-t * t / (4.0 * c * lip2)) : (t > 0 ? 0.0 : 1.0);
  } else {
    value = t > 0 ? c * std::pow(t, -q) * std::pow(lip2, q / 2.0) : 1.0;
  }
  return std::min(1.0, value);
}

double weak_norm(std::vector<double> samples, double q) {
  if (samples.empty()) throw std::invalid_argument("weak_norm needs samples");
  if (q < 1.0) throw std::invalid_argument("weak_norm needs Q >= 1");
  for (auto& s : samples) s = std::abs(s);
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  double best = 0;
  for (std::size_t i = 0; i < n; ++i) {
    // P(|Z| > t) just below samples[i] is (n - i) / n.
    const double p = static_cast<double>(n - i) / static_cast<double>(n);
    best = std::max(best, samples[i] * std::pow(p, 1.0 / q));
  }
  return best;
}

MomentScan moment_scan(const IntervalMap& map, const std::function<double(double)>& f,
                       double lip_f, std::span<const std::size_t> n_list, std::size_t trials,
                       double q, std::uint64_t master_seed, int threads, std::size_t burn_in) {
  MomentScan scan;
  std::vector<double> log_n, log_m;
  for (std::size_t n : n_list) {
    DeviationExperiment exp;
    exp.map = map;
    exp.obs = birkhoff(f, lip_f, n, "birkhoff");
    exp.trials = trials;
    exp.t_grid = {1.0};  // unused rows; we only need the deviations
    exp.master_seed = master_seed ^ (0x9e3779b97f4a7c15ULL * n);
    exp.burn_in = burn_in;
    exp.threads = threads;
    const auto rep = run_deviation(exp);

    std::vector<double> powered(rep.deviations.size());
    for (std::size_t i = 0; i < powered.size(); ++i) powered[i] = std::pow(rep.deviations[i], q);
    const double moment = mean(powered);
    std::sort(powered.begin(), powered.end());
    const std::size_t top = std::max<std::size_t>(1, powered.size() / 100);
    double top_share = 0;
    for (std::size_t i = powered.size() - top; i < powered.size(); ++i) top_share += powered[i];
    top_share /= static_cast<double>(powered.size()) * std::max(moment, 1e-300);

    scan.n_list.push_back(n);
    scan.moments.push_back(moment);
    scan.heavy_tail_flag.push_back(top_share > 0.25);
    if (moment > 0) {
      log_n.push_back(std::log(static_cast<double>(n)));
      log_m.push_back(std::log(moment));
    }
  }
  scan.slope_fit = linear_fit(log_n, log_m);
  return scan;
}

double maximal_function_ratio(std::span<const double> lip, std::size_t p_extra) {
  double lip2 = 0;
  for (double l : lip) lip2 += l * l;
  if (lip2 == 0) return 0.0;
  const std::size_t len = lip.size();
  std::vector<double> prefix(len + 1, 0.0);
  for (std::size_t j = 0; j < len; ++j) prefix[j + 1] = prefix[j] + lip[j];
  double total = 0;
  for (std::size_t p = 0; p < len + p_extra; ++p) {
    double sup = 0;
    // Windows [p-h+1, p] clipped to the support; the first h that reaches it
    // is p+2-len when p is past the end, and once a window hits 0 larger h
    // only dilutes the average.
    const std::size_t b = std::min(p + 1, len);
    const std::size_t h_lo = (p + 1 > len) ? p + 2 - len : 1;
    for (std::size_t h = h_lo; h <= p + 1; ++h) {
      const std::size_t a = p + 1 - h;
      if (a >= b) continue;
      const double avg = (prefix[b] - prefix[a]) / static_cast<double>(h);
      sup = std::max(sup, avg);
      if (a == 0) break;
    }
    total += sup * sup;
  }
  return total / lip2;
}

TechnicalMcReport technical_theorem_mc(const TowerSpec& spec, std::span<const double> weights,
                                       std::size_t trials, int orbit_len,
                                       std::uint64_t master_seed, int threads) {
  const int k_max = static_cast<int>(weights.size()) - 1;
  if (k_max >= orbit_len)
    throw std::invalid_argument("weights support must fit inside the orbit length");
  if (spec.tail.kind == TailKind::Exponential)
    throw std::invalid_argument("the appendix estimate targets polynomial towers");
  const double q = spec.tail.param;

  double lip2 = 0;
  for (double l : weights) lip2 += l * l;

  std::vector<double> vals(trials);
  run_indexed_tasks(trials, threads, [&](std::size_t i) {
    RngStream rng = RngStream::substream(master_seed, i);
    TowerPoint p = sample_tower_point(spec, rng);
    // Base-visit counts C(t) = #{j in [1,t] : T^j x in base}.
    std::vector<int> visit_count(static_cast<std::size_t>(orbit_len) + 1, 0);
    std::vector<char> at_base(static_cast<std::size_t>(orbit_len) + 1, 0);
    at_base[0] = (p.level == 0);
    for (int t = 1; t <= orbit_len; ++t) {
      p = tower_step(spec, p);
      at_base[static_cast<std::size_t>(t)] = (p.level == 0);
      visit_count[static_cast<std::size_t>(t)] =
          visit_count[static_cast<std::size_t>(t) - 1] + (p.level == 0 ? 1 : 0);
    }
    double outer = 0;
    for (int r = 0; r <= k_max; ++r) {
      if (!at_base[static_cast<std::size_t>(r)]) continue;  // Phi vanishes off the base
      double inner = 0;
      for (int k = r; k <= k_max; ++k) {
        const double lk = weights[static_cast<std::size_t>(k)];
        if (lk == 0) continue;
        const int returns = visit_count[static_cast<std::size_t>(k)] -
                            visit_count[static_cast<std::size_t>(r)];
        inner += lk * std::pow(spec.beta, returns);
      }
      outer += inner * inner;
    }
    vals[i] = std::pow(outer, q - 1.0);
  });

  TechnicalMcReport rep;
  rep.trials = trials;
  rep.raw_moment = mean(vals);
  rep.std_error = std::sqrt(variance(vals) / static_cast<double>(trials));
  rep.ratio = lip2 > 0 ? rep.raw_moment / std::pow(lip2, q - 1.0) : 0.0;
  return rep;
}

}  // namespace towerlab
