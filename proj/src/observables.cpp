#include "towerlab/observables.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace towerlab {

Observable birkhoff(std::function<double(double)> f, double lip_f, std::size_t n,
                    std::string label) {
  Observable obs;
  obs.arity = n;
  obs.lip.assign(n, lip_f);
  obs.label = std::move(label);
  obs.eval = [f = std::move(f)](std::span<const double> x) {
    double s = 0;
    for (double v : x) s += f(v);
    return s;
  };
  return obs;
}

Observable empirical_covariance_obs(std::function<double(double)> f, double lip_f,
                                    double sup_f, std::size_t n, std::size_t lag,
                                    std::string label) {
  Observable obs;
  obs.arity = n + lag;
  obs.lip.assign(n + lag, 2.0 * lip_f * sup_f / static_cast<double>(n));
  obs.label = std::move(label);
  obs.eval = [f = std::move(f), n, lag](std::span<const double> x) {
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) s += f(x[j]) * f(x[j + lag]);
    return s / static_cast<double>(n);
  };
  return obs;
}

LipCertification certify_lipschitz(const Observable& obs, RngStream& rng,
                                   std::size_t trials) {
  LipCertification cert;
  cert.trials = trials;
  std::vector<double> x(obs.arity);
  for (std::size_t t = 0; t < trials; ++t) {
    for (auto& v : x) v = rng.next_double();
    const std::size_t j = rng.next_below(obs.arity);
    const double base = obs.eval(x);
    const double old = x[j];
    double moved = rng.next_double();
    if (moved == old) moved = 0.5 * (old + 1.0 / 3.0);
    x[j] = moved;
    const double dk = std::abs(obs.eval(x) - base);
    x[j] = old;
    const double allowed = obs.lip[j] * std::abs(moved - old);
    if (dk == 0.0) continue;
    const double ratio = allowed > 0 ? dk / allowed
                                     : std::numeric_limits<double>::infinity();
    cert.worst_ratio = std::max(cert.worst_ratio, ratio);
    if (dk > allowed * (1.0 + 1e-6)) cert.passed = false;
  }
  return cert;
}

namespace {

// Composite 7-point Gauss-Legendre on [a,b], panel count chosen by caller.
double gauss7(const std::function<double(double)>& g, double a, double b, int panels) {
  static const double nodes[7] = {-0.9491079123427585, -0.7415311855993945,
                                  -0.4058451513773972, 0.0,
                                  0.4058451513773972,  0.7415311855993945,
                                  0.9491079123427585};
  static const double weights[7] = {0.1294849661688697, 0.2797053914892766,
                                    0.3818300505051189, 0.4179591836734694,
                                    0.3818300505051189, 0.2797053914892766,
                                    0.1294849661688697};
  const double h = (b - a) / panels;
  double total = 0;
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    double s = 0;
    for (int i = 0; i < 7; ++i) s += weights[i] * g(mid + 0.5 * h * nodes[i]);
    total += s * 0.5 * h;
  }
  return total;
}

}  // namespace

AutocovResult autocovariance_reference(const IntervalMap& map,
                                       const std::function<double(double)>& f,
                                       std::size_t lag_max, RngStream& rng,
                                       std::size_t orbit_len, std::size_t burn_in) {
  AutocovResult out;
  out.values.resize(lag_max + 1);
  out.std_errors.assign(lag_max + 1, 0.0);

  if (std::holds_alternative<DoublingMap>(map)) {
    // Quadrature against Lebesgue; f(T^l x) has 2^l branches, so panel count
    // scales with the lag.
    const double f_mean = gauss7(f, 0.0, 1.0, 256);
    auto fc = [&](double x) { return f(x) - f_mean; };
    for (std::size_t l = 0; l <= lag_max; ++l) {
      const int panels = 64 << std::min<std::size_t>(l, 12);
      DoublingMap dm;
      out.values[l] = gauss7(
          [&](double x) {
            double y = x;
            for (std::size_t k = 0; k < l; ++k) y = dm.step(y);
            return fc(x) * fc(y);
          },
          0.0, 1.0, panels);
    }
    return out;
  }

  // Long-orbit estimate with empirical centering and batch-means errors.
  auto orbit = sample_stationary_orbit(map, rng, orbit_len + lag_max, burn_in);
  std::vector<double> fx(orbit.size());
  for (std::size_t i = 0; i < orbit.size(); ++i) fx[i] = f(orbit[i]);
  const double m = mean(std::span<const double>(fx.data(), orbit_len));
  for (auto& v : fx) v -= m;
  std::vector<double> prod(orbit_len);
  for (std::size_t l = 0; l <= lag_max; ++l) {
    for (std::size_t i = 0; i < orbit_len; ++i) prod[i] = fx[i] * fx[i + l];
    out.values[l] = mean(prod);
    out.std_errors[l] = batch_means_stderr(prod);
  }
  return out;
}

PiecewiseLinearCdf PiecewiseLinearCdf::uniform() { return {{0.0, 1.0}, {0.0, 1.0}}; }

PiecewiseLinearCdf PiecewiseLinearCdf::from_density(std::span<const double> density) {
  const std::size_t g = density.size();
  PiecewiseLinearCdf cdf;
  cdf.xs.resize(g + 1);
  cdf.ys.resize(g + 1);
  double total = 0;
  for (double d : density) total += d;
  double acc = 0;
  cdf.xs[0] = 0.0;
  cdf.ys[0] = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    acc += density[i];
    cdf.xs[i + 1] = static_cast<double>(i + 1) / static_cast<double>(g);
    cdf.ys[i + 1] = acc / total;
  }
  cdf.ys[g] = 1.0;
  return cdf;
}

void PiecewiseLinearCdf::validate() const {
  if (xs.size() != ys.size() || xs.size() < 2) throw std::invalid_argument("bad cdf knots");
  if (xs.front() != 0.0 || xs.back() != 1.0 || ys.front() != 0.0 || ys.back() != 1.0)
    throw std::invalid_argument("cdf must span [0,1] with F(0)=0, F(1)=1");
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (xs[i] <= xs[i - 1] || ys[i] < ys[i - 1])
      throw std::invalid_argument("cdf must be nondecreasing on increasing knots");
}

double PiecewiseLinearCdf::operator()(double x) const {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t i = static_cast<std::size_t>(it - xs.begin());
  const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
  return ys[i - 1] + t * (ys[i] - ys[i - 1]);
}

namespace {

// int_a^b |c - F(s)| ds for a linear piece of F; split at the crossing.
double abs_linear_integral(double c, double fa, double fb, double a, double b) {
  if (b <= a) return 0.0;
  const double da = fa - c, db = fb - c;
  if (da * db >= 0.0)
    return 0.5 * (std::abs(da) + std::abs(db)) * (b - a);
  const double cross = a + (b - a) * (c - fa) / (fb - fa);
  return 0.5 * std::abs(da) * (cross - a) + 0.5 * std::abs(db) * (b - cross);
}

}  // namespace

double kantorovich_1d(std::span<const double> sorted_samples, const PiecewiseLinearCdf& ref) {
  const std::size_t n = sorted_samples.size();
  if (n == 0) throw std::invalid_argument("kantorovich_1d needs samples");
  for (std::size_t i = 1; i < n; ++i)
    if (sorted_samples[i] < sorted_samples[i - 1])
      throw std::invalid_argument("kantorovich_1d needs sorted samples");
  if (sorted_samples.front() < 0.0 || sorted_samples.back() > 1.0)
    throw std::invalid_argument("samples must lie in [0,1]");

  // Walk the merged breakpoints of the empirical step CDF and the knots.
  double total = 0;
  std::size_t k = 0;  // samples passed
  std::size_t j = 1;  // next cdf knot
  double pos = 0.0;
  while (pos < 1.0) {
    const double next_sample = (k < n) ? sorted_samples[k] : 2.0;
    const double next_knot = (j < ref.xs.size()) ? ref.xs[j] : 2.0;
    const double stop = std::min({next_sample, next_knot, 1.0});
    if (stop > pos) {
      const double fn = static_cast<double>(k) / static_cast<double>(n);
      total += abs_linear_integral(fn, ref(pos), ref(stop), pos, stop);
      pos = stop;
    }
    while (k < n && sorted_samples[k] <= pos) ++k;
    while (j < ref.xs.size() && ref.xs[j] <= pos) ++j;
  }
  return total;
}

double kantorovich_samples(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("empty sample set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  // int |F_a - F_b| over the merged breakpoints.
  double total = 0;
  std::size_t i = 0, j = 0;
  double pos = std::min(a[0], b[0]);
  while (i < a.size() || j < b.size()) {
    const double na = i < a.size() ? a[i] : std::numeric_limits<double>::infinity();
    const double nb = j < b.size() ? b[j] : std::numeric_limits<double>::infinity();
    const double next = std::min(na, nb);
    const double fa = static_cast<double>(i) / static_cast<double>(a.size());
    const double fb = static_cast<double>(j) / static_cast<double>(b.size());
    if (next > pos && std::isfinite(next)) total += std::abs(fa - fb) * (next - pos);
    pos = next;
    while (i < a.size() && a[i] <= pos) ++i;
    while (j < b.size() && b[j] <= pos) ++j;
  }
  return total;
}

double empirical_measure_dn(const IntervalMap& map, double x0, std::size_t n,
                            const PiecewiseLinearCdf& ref) {
  auto orbit = generate_orbit(map, x0, n);
  std::sort(orbit.begin(), orbit.end());
  return kantorovich_1d(orbit, ref);
}

std::vector<double> kde_estimate(std::span<const double> points, std::size_t grid,
                                 double bandwidth, const KernelSpec& kspec) {
  if (bandwidth <= 0.0) throw std::invalid_argument("bandwidth must be positive");
  std::vector<double> h(grid, 0.0);
  const double g = static_cast<double>(grid);
  const double scale = 1.0 / (static_cast<double>(points.size()) * bandwidth);
  const double reach = kspec.support * bandwidth;
  for (double x : points) {
    const int lo = std::max(0, static_cast<int>((x - reach) * g));
    const int hi = std::min(static_cast<int>(grid) - 1, static_cast<int>((x + reach) * g) + 1);
    for (int i = lo; i <= hi; ++i) {
      const double s = (i + 0.5) / g;
      h[static_cast<std::size_t>(i)] += kspec.psi((s - x) / bandwidth) * scale;
    }
  }
  return h;
}

BesovModulus besov_modulus(std::span<const double> density, std::span<const double> t_list) {
  BesovModulus out;
  const std::size_t g = density.size();
  std::vector<double> lx, ly;
  for (double t : t_list) {
    const auto shift = static_cast<std::size_t>(std::lround(t * static_cast<double>(g)));
    double acc = 0;
    for (std::size_t i = shift; i < g; ++i) acc += std::abs(density[i] - density[i - shift]);
    const double value = acc / static_cast<double>(g);
    out.moduli.push_back(value);
    if (value > 0 && t > 0) {
      lx.push_back(std::log(t));
      ly.push_back(std::log(value));
    }
  }
  if (lx.size() >= 2) out.fitted_exponent = linear_fit(lx, ly).slope;
  return out;
}

double integrated_periodogram(std::span<const double> f, double omega, std::size_t lag_cap) {
  const std::size_t n = f.size();
  if (n == 0) throw std::invalid_argument("empty signal");
  if (omega < 0.0 || omega > 2.0 * M_PI + 1e-12)
    throw std::invalid_argument("omega must lie in [0, 2pi]");
  if (lag_cap == 0 || lag_cap > n - 1) lag_cap = n - 1;
  double sq = 0;
  for (double v : f) sq += v * v;
  double total = omega * sq / static_cast<double>(n);
  for (std::size_t m = 1; m <= lag_cap; ++m) {
    double lagsum = 0;
    for (std::size_t j = 0; j + m < n; ++j) lagsum += f[j] * f[j + m];
    total += 2.0 * std::sin(static_cast<double>(m) * omega) / static_cast<double>(m) *
             lagsum / static_cast<double>(n);
  }
  return total;
}

PeriodogramLimit periodogram_limit(std::span<const double> autocov, double omega,
                                   std::size_t lag_max) {
  if (autocov.empty()) throw std::invalid_argument("empty autocovariance");
  PeriodogramLimit out;
  out.value = autocov[0] * omega;
  const std::size_t cap = std::min(lag_max, autocov.size() - 1);
  for (std::size_t l = 1; l <= cap; ++l)
    out.value += 2.0 * std::sin(omega * static_cast<double>(l)) / static_cast<double>(l) *
                 autocov[l];
  for (std::size_t l = cap + 1; l < autocov.size(); ++l)
    out.tail_bound += 2.0 * std::abs(autocov[l]) / static_cast<double>(l);
  return out;
}

SupPeriodogramGap sup_periodogram_gap(std::span<const double> f,
                                      std::span<const double> autocov, std::size_t grid_n) {
  if (grid_n < 2) throw std::invalid_argument("omega grid needs N >= 2");
  const std::size_t n = f.size();
  std::vector<double> lagsums(n, 0.0);  // lagsums[m] = sum_j f_j f_{j+m}
  for (std::size_t m = 0; m < n; ++m) {
    double s = 0;
    for (std::size_t j = 0; j + m < n; ++j) s += f[j] * f[j + m];
    lagsums[m] = s;
  }
  SupPeriodogramGap out;
  out.grid = grid_n;
  for (std::size_t p = 0; p <= grid_n; ++p) {
    const double omega = 2.0 * M_PI * static_cast<double>(p) / static_cast<double>(grid_n);
    double jn = omega * lagsums[0] / static_cast<double>(n);
    for (std::size_t m = 1; m < n; ++m)
      jn += 2.0 * std::sin(static_cast<double>(m) * omega) / static_cast<double>(m) *
            lagsums[m] / static_cast<double>(n);
    const double jlim = periodogram_limit(autocov, omega, autocov.size() - 1).value;
    out.gap = std::max(out.gap, std::abs(jn - jlim));
  }
  // The discretization argument pays C/N; report it with C = 1.
  out.grid_term = 1.0 / static_cast<double>(grid_n);
  return out;
}

TracingStats tracing_stats(std::span<const double> orbit,
                           const std::vector<std::vector<double>>& pool, double eps) {
  if (pool.empty()) throw std::invalid_argument("tracing needs a nonempty candidate pool");
  if (eps <= 0.0) throw std::invalid_argument("tracing needs eps > 0");
  const std::size_t n = orbit.size();
  TracingStats out;
  out.pool = pool.size();
  double best_s = std::numeric_limits<double>::infinity();
  double best_m = std::numeric_limits<double>::infinity();
  for (const auto& cand : pool) {
    if (cand.size() != n) throw std::invalid_argument("pool orbit length mismatch");
    double dist = 0;
    std::size_t mism = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = std::abs(orbit[j] - cand[j]);
      dist += d;
      if (d > eps) ++mism;
    }
    best_s = std::min(best_s, dist / static_cast<double>(n));
    best_m = std::min(best_m, static_cast<double>(mism) / static_cast<double>(n));
  }
  out.s_mean_dist = best_s;
  out.m_mismatch = best_m;
  return out;
}

}  // namespace towerlab
