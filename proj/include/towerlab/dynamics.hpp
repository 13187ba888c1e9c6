#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "towerlab/rng.hpp"

namespace towerlab {

// x -> 2x mod 1, Lebesgue-invariant.
struct DoublingMap {
  double step(double x) const;
};

// Interval map with a neutral fixed point at 0:
//   T(x) = x (1 + 2^a x^a)  on [0, 1/2],   T(x) = 2x - 1  on (1/2, 1].
// The intermittency exponent a must lie strictly inside (0,1).
struct IntermittentMap {
  double alpha;
  explicit IntermittentMap(double a);
  double step(double x) const;
};

using IntervalMap = std::variant<DoublingMap, IntermittentMap>;

double map_step(const IntervalMap& map, double x);

// Deterministic orbit from an explicit initial point. For the doubling map in
// binary64 this is exact arithmetic and therefore collapses onto the dyadic
// fixed point after ~52 steps; use sample_stationary_orbit for ensembles.
std::vector<double> generate_orbit(const IntervalMap& map, double x0, std::size_t n);

// One draw from the invariant measure. Exact for the doubling map; for the
// intermittent map it is the endpoint of a burn_in-length orbit started from
// a uniform draw.
double sample_invariant(const IntervalMap& map, RngStream& rng, std::size_t burn_in);

// Length-n stationary orbit. Doubling: a sliding 53-bit window over an i.i.d.
// bit stream, which is an exact sample of the stationary process (x, Tx, ...)
// and does not suffer the dyadic collapse. Intermittent: burn-in plus orbit.
std::vector<double> sample_stationary_orbit(const IntervalMap& map, RngStream& rng,
                                            std::size_t n, std::size_t burn_in);

// Smallest k >= 1 with T^k x in [1/2, 1], for x in the inducing base [1/2, 1].
// Throws std::runtime_error when the cap is exceeded (x numerically trapped
// near the neutral fixed point).
std::uint64_t first_return_time(const IntermittentMap& map, double x,
                                std::uint64_t cap = 10'000'000ULL);

// Fitted exponent of P(phi = n) from `samples` uniform base draws: weighted
// log-log regression of the survival function over n in [fit_lo, fit_hi],
// truncated where fewer than `min_count` survivors remain, plus one (survival
// decays one power slower than the pmf). The window starts at 16 because the
// pre-asymptotic curvature of the return-time law biases earlier windows.
struct TailFitResult {
  double exponent = 0.0;
  std::size_t points = 0;
  std::uint64_t deepest_n = 0;
};
TailFitResult return_time_tail_exponent(const IntermittentMap& map, std::size_t samples,
                                        std::uint64_t seed, std::uint64_t fit_lo = 16,
                                        std::uint64_t fit_hi = 128,
                                        std::size_t min_count = 50);

// Full shift (or Markov shift) on `symbol_count` symbols with the metric
// d(x,y) = beta^{s(x,y)}.
struct ShiftSystem {
  int symbol_count = 2;
  double beta = 0.5;
  std::vector<double> probs;                 // product measure / stationary law
  std::vector<std::vector<double>> markov;   // empty => product measure

  static ShiftSystem bernoulli(std::vector<double> p, double beta = 0.5);
  static ShiftSystem markov_chain(std::vector<std::vector<double>> rows,
                                  std::vector<double> stationary, double beta = 0.5);
  bool is_markov() const { return !markov.empty(); }
  void validate() const;
};

// Finite window of a shift orbit; shifting consumes the front symbol and
// refills at the back from the caller-owned stream.
struct ShiftState {
  std::vector<std::uint8_t> word;
  RngStream stream;
};

ShiftState sample_shift_state(const ShiftSystem& sys, RngStream rng, std::size_t word_len = 64);
void shift_step(const ShiftSystem& sys, ShiftState& state);

// Orbit of words under the left shift (each row one window).
std::vector<std::vector<std::uint8_t>> generate_shift_orbit(const ShiftSystem& sys,
                                                            ShiftState state, std::size_t n);

}  // namespace towerlab
