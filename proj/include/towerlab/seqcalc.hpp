#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "towerlab/stats.hpp"

namespace towerlab {

// A finite nonnegative sequence claiming a moment of order Q. The claim is a
// statement about partial-sum stability at the horizon, not a proof; see
// moment_stability in stats.hpp. The default horizon is 2^14 terms.
struct MomentSeq {
  std::vector<double> values;
  double moment_q = 0.0;

  std::size_t horizon() const { return values.empty() ? 0 : values.size() - 1; }
  StabilityReport check() const;
  void require_valid(const std::string& who) const;  // throws when the claim fails
};

constexpr std::size_t kDefaultHorizon = std::size_t{1} << 14;

// w_n = sum_{k<=n} u_k v_{n-k}; output claims moment min(Qu, Qv). Both input
// claims are re-verified first.
MomentSeq convolve(const MomentSeq& u, const MomentSeq& v);

// d_n = sum_{k>=n} c_k (truncated at the horizon); nonincreasing, claims Q-1.
MomentSeq tail_sum(const MomentSeq& c);

// Weight systems u(r,k), r < k, generated from a summable sequence M either
// directly (u = M_k) or by window averaging (u = avg of M over [r,k)).
enum class WeightKind { Direct, WindowAverage };

struct WeightSystem {
  WeightKind kind = WeightKind::Direct;
  std::vector<double> M;

  WeightSystem() = default;
  WeightSystem(WeightKind k, std::vector<double> m);

  double sigma() const { return sigma_; }
  std::size_t horizon() const { return M.size(); }
  double u(std::size_t r, std::size_t k) const;  // requires r < k < horizon

 private:
  std::vector<double> prefix_;  // prefix_[i] = sum of M[0..i)
  double sigma_ = 0.0;
};

// sum_r u(r, r+m) over the horizon. Guaranteed <= sigma (asserted; a
// violation is a bug in the weight algebra, not an input error).
double weight_sum_over_r(const WeightSystem& w, std::size_t m);

// The constructive domination system v with sum <= (sum c) * sigma(u):
// sum_{r<s} u(r,k) c_{s-r} <= v(s,k) for all s < k.
WeightSystem build_weight_v(const WeightSystem& u, const MomentSeq& c);

// Left-hand side of the domination above, for grid checks.
double weight_convolution_lhs(const WeightSystem& u, std::span<const double> c,
                              std::size_t s, std::size_t k);

}  // namespace towerlab
