#include "towerlab/seqcalc.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace towerlab {

StabilityReport MomentSeq::check() const { return moment_stability(values, moment_q); }

void MomentSeq::require_valid(const std::string& who) const {
  for (double v : values)
    if (v < 0.0 || !std::isfinite(v))
      throw std::invalid_argument(who + ": sequence must be nonnegative and finite");
  if (!check().stable)
    throw std::invalid_argument(who + ": moment-" + std::to_string(moment_q) +
                                " partial sums fail the stability criterion");
}

MomentSeq convolve(const MomentSeq& u, const MomentSeq& v) {
  u.require_valid("convolve/u");
  v.require_valid("convolve/v");
  const std::size_t n = std::min(u.values.size(), v.values.size());
  MomentSeq w;
  w.moment_q = std::min(u.moment_q, v.moment_q);
  w.values.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double ui = u.values[i];
    if (ui == 0.0) continue;
    for (std::size_t j = 0; i + j < n; ++j) w.values[i + j] += ui * v.values[j];
  }
  w.require_valid("convolve/output");
  return w;
}

MomentSeq tail_sum(const MomentSeq& c) {
  if (c.moment_q < 1.0) throw std::invalid_argument("tail_sum needs a moment of order >= 1");
  MomentSeq d;
  d.moment_q = c.moment_q - 1.0;
  d.values.assign(c.values.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = c.values.size(); i-- > 0;) {
    acc += c.values[i];
    d.values[i] = acc;
  }
  return d;
}

WeightSystem::WeightSystem(WeightKind k, std::vector<double> m) : kind(k), M(std::move(m)) {
  prefix_.assign(M.size() + 1, 0.0);
  for (std::size_t i = 0; i < M.size(); ++i) {
    if (M[i] < 0.0) throw std::invalid_argument("weight system needs nonnegative M");
    prefix_[i + 1] = prefix_[i] + M[i];
  }
  sigma_ = prefix_.empty() ? 0.0 : prefix_.back();
}

double WeightSystem::u(std::size_t r, std::size_t k) const {
  if (r >= k) throw std::invalid_argument("weight system accessor needs r < k");
  if (kind == WeightKind::Direct) return k < M.size() ? M[k] : 0.0;
  // Window sums are accumulated directly: a prefix-difference formulation
  // cancels catastrophically when the window mass is far below the total.
  double acc = 0.0;
  for (std::size_t j = r; j < k && j < M.size(); ++j) acc += M[j];
  return acc / static_cast<double>(k - r);
}

double weight_sum_over_r(const WeightSystem& w, std::size_t m) {
  if (m == 0) throw std::invalid_argument("weight_sum_over_r needs m > 0");
  double total = 0.0;
  for (std::size_t r = 0; r + m < w.horizon(); ++r) total += w.u(r, r + m);
  assert(total <= w.sigma() * (1.0 + 1e-12) + 1e-300);
  return total;
}

double weight_convolution_lhs(const WeightSystem& u, std::span<const double> c,
                              std::size_t s, std::size_t k) {
  double total = 0.0;
  for (std::size_t r = 0; r < s; ++r) {
    const std::size_t lag = s - r;
    if (lag < c.size()) total += u.u(r, k) * c[lag];
  }
  return total;
}

WeightSystem build_weight_v(const WeightSystem& u, const MomentSeq& c) {
  c.require_valid("build_weight_v/c");
  double c_total = 0.0;
  for (double x : c.values) c_total += x;

  if (u.kind == WeightKind::Direct) {
    std::vector<double> m(u.M.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = c_total * u.M[i];
    return WeightSystem(WeightKind::Direct, std::move(m));
  }

  // Window-averaged input: M'_s = C M_s + sum_{j<s} M_j * tail(c)_{s-j}.
  // The construction outlives the input support (the convolution term keeps
  // feeding mass), so the output sequence extends through both horizons.
  const MomentSeq tails = tail_sum(c);
  std::vector<double> mp(u.M.size() + c.values.size(), 0.0);
  for (std::size_t s = 0; s < mp.size(); ++s) {
    double acc = s < u.M.size() ? c_total * u.M[s] : 0.0;
    for (std::size_t j = 0; j < std::min(s, u.M.size()); ++j) {
      const std::size_t lag = s - j;
      if (lag < tails.values.size()) acc += u.M[j] * tails.values[lag];
    }
    mp[s] = acc;
  }
  return WeightSystem(WeightKind::WindowAverage, std::move(mp));
}

}  // namespace towerlab
