#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "towerlab/dynamics.hpp"
#include "towerlab/stats.hpp"

namespace towerlab {

// Observable along a shift orbit: coordinate j is the point T^j x, read
// through its first `sight` symbols, so an evaluation touches the leading
// arity + sight - 1 symbols of the word.
struct WordObservable {
  std::size_t arity = 1;
  std::size_t sight = 1;
  std::function<double(std::span<const std::uint8_t>)> eval;
  std::vector<double> lip;  // per-coordinate bounds in the beta^s metric
  std::string label;

  std::size_t span() const { return arity + sight - 1; }
};

// Exact conditional-expectation engine on a full shift with product measure.
// Words are extended past the evaluation span by a fixed tail symbol so that
// finite suffixes determine the value.
struct ExactShiftContext {
  ShiftSystem shift;            // product measure only
  std::uint8_t tail_symbol = 0;
  std::size_t budget = std::size_t{1} << 20;  // max enumerated prefixes

  void validate() const;
};

// K_p(suffix) = sum over length-p prefix words w of weight(w) K(w . suffix).
double exact_kp(const ExactShiftContext& ctx, const WordObservable& obs, std::size_t p,
                std::span<const std::uint8_t> suffix);

// D_p(suffix) = K_p(suffix) - K_{p+1}(shifted suffix).
double exact_dp(const ExactShiftContext& ctx, const WordObservable& obs, std::size_t p,
                std::span<const std::uint8_t> suffix);

// E(K) by full enumeration over the evaluation span.
double exact_expectation(const ExactShiftContext& ctx, const WordObservable& obs);

// E(D_p | F_{p+1})(suffix') — exactly zero for reverse martingale differences.
double martingale_residual(const ExactShiftContext& ctx, const WordObservable& obs,
                           std::size_t p, std::span<const std::uint8_t> suffix_tail);

// K(word) - E(K) - sum_{p < P} D_p, evaluated exactly; vanishes once P covers
// the evaluation span.
double telescoping_residual(const ExactShiftContext& ctx, const WordObservable& obs,
                            std::span<const std::uint8_t> word);

struct LemmaCloseFit {
  std::vector<double> sup_dp;  // sup over sampled suffixes of |D_p|, per p
  double c_fit = 0.0;
  double rho_fit = 0.0;
  bool exact_zero = false;  // all |D_p| vanished beyond p = 0
};

// Probe decay |D_p| <= C rho^p for an observable whose Lipschitz profile is
// concentrated on one coordinate; (C, rho) by log-linear regression.
LemmaCloseFit check_lemma_close(const ExactShiftContext& ctx, const WordObservable& obs,
                                std::size_t suffix_samples, std::uint64_t seed);

struct HoeffdingAzumaReport {
  double worst_ratio = 0.0;  // max over batch of E e^{K-EK} / e^{sum_p sup |D_p|^2}
  std::size_t batch = 0;
  bool passed = false;       // worst_ratio <= 1
};

HoeffdingAzumaReport check_hoeffding_azuma(const ExactShiftContext& ctx,
                                           std::span<const WordObservable> batch);

// Random separately-Lipschitz observable: sums of per-coordinate symbol
// tables with exactly known Lipschitz constants.
WordObservable random_word_observable(const ShiftSystem& sys, std::size_t arity,
                                      RngStream& rng, double amplitude = 1.0);

// K(x_j) = beta^{min(s(x_j, w*), cap)}: a distance-to-point probe with
// Lip = delta_{j, coord}.
WordObservable distance_probe(const ShiftSystem& sys, std::size_t coord,
                              std::vector<std::uint8_t> target, std::size_t cap);

// sup over sampled suffixes of |K_p - int K(y, .., T^{p-1} y, suffix) dmu(y)|,
// the integral computed by the same exact enumeration with a free tail.
std::vector<double> kp_integral_gap(const ExactShiftContext& ctx, const WordObservable& obs,
                                    std::size_t p_max, std::size_t suffix_samples,
                                    std::uint64_t seed);

}  // namespace towerlab
