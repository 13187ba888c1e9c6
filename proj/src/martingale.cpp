#include "towerlab/martingale.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace towerlab {

void ExactShiftContext::validate() const {
  shift.validate();
  if (shift.is_markov())
    throw std::invalid_argument("exact enumeration supports product measures only");
  if (tail_symbol >= shift.symbol_count)
    throw std::invalid_argument("tail symbol out of range");
}

namespace {

std::size_t checked_pow(std::size_t base, std::size_t exp, std::size_t budget) {
  std::size_t v = 1;
  for (std::size_t i = 0; i < exp; ++i) {
    v *= base;
    if (v > budget) throw std::invalid_argument("enumeration budget exceeded");
  }
  return v;
}

// Fill `word` positions [0, depth) by odometer index, return product weight.
double weight_of(const ExactShiftContext& ctx, std::span<std::uint8_t> word,
                 std::size_t depth, std::size_t index) {
  const auto k = static_cast<std::size_t>(ctx.shift.symbol_count);
  double w = 1.0;
  for (std::size_t i = 0; i < depth; ++i) {
    const auto sym = static_cast<std::uint8_t>(index % k);
    index /= k;
    word[i] = sym;
    w *= ctx.shift.probs[sym];
  }
  return w;
}

}  // namespace

double exact_kp(const ExactShiftContext& ctx, const WordObservable& obs, std::size_t p,
                std::span<const std::uint8_t> suffix) {
  ctx.validate();
  const std::size_t span = obs.span();
  // Prefix symbols past the evaluation span integrate out to weight one.
  const std::size_t depth = std::min(p, span);
  const std::size_t count = checked_pow(ctx.shift.symbol_count, depth, ctx.budget);

  std::vector<std::uint8_t> word(span, ctx.tail_symbol);
  for (std::size_t i = depth; i < span; ++i) {
    const std::size_t s = i - depth;  // position within the suffix stream
    if (s < suffix.size()) word[i] = suffix[s];
  }

  double total = 0;
  for (std::size_t idx = 0; idx < count; ++idx) {
    const double w = weight_of(ctx, std::span<std::uint8_t>(word.data(), depth), depth, idx);
    total += w * obs.eval(word);
  }
  return total;
}

double exact_dp(const ExactShiftContext& ctx, const WordObservable& obs, std::size_t p,
                std::span<const std::uint8_t> suffix) {
  const double kp = exact_kp(ctx, obs, p, suffix);
  const auto shifted = suffix.size() > 0 ? suffix.subspan(1) : suffix;
  return kp - exact_kp(ctx, obs, p + 1, shifted);
}

double exact_expectation(const ExactShiftContext& ctx, const WordObservable& obs) {
  return exact_kp(ctx, obs, obs.span(), {});
}

double martingale_residual(const ExactShiftContext& ctx, const WordObservable& obs,
                           std::size_t p, std::span<const std::uint8_t> suffix_tail) {
  std::vector<std::uint8_t> suffix(suffix_tail.size() + 1);
  std::copy(suffix_tail.begin(), suffix_tail.end(), suffix.begin() + 1);
  double total = 0;
  for (int a = 0; a < ctx.shift.symbol_count; ++a) {
    suffix[0] = static_cast<std::uint8_t>(a);
    total += ctx.shift.probs[static_cast<std::size_t>(a)] * exact_dp(ctx, obs, p, suffix);
  }
  return total;
}

double telescoping_residual(const ExactShiftContext& ctx, const WordObservable& obs,
                            std::span<const std::uint8_t> word) {
  if (word.size() < obs.span()) throw std::invalid_argument("word shorter than evaluation span");
  double acc = obs.eval(word) - exact_expectation(ctx, obs);
  for (std::size_t p = 0; p < obs.span(); ++p)
    acc -= exact_dp(ctx, obs, p, word.subspan(p));
  return acc;
}

LemmaCloseFit check_lemma_close(const ExactShiftContext& ctx, const WordObservable& obs,
                                std::size_t suffix_samples, std::uint64_t seed) {
  const std::size_t span = obs.span();
  LemmaCloseFit out;
  out.sup_dp.resize(span, 0.0);
  std::vector<std::uint8_t> suffix(span);
  for (std::size_t p = 0; p < span; ++p) {
    double sup = 0;
    for (std::size_t t = 0; t < suffix_samples; ++t) {
      RngStream rng = RngStream::substream(seed ^ (0x5bULL + p), t);
      for (auto& s : suffix)
        s = static_cast<std::uint8_t>(sample_categorical(rng, ctx.shift.probs));
      sup = std::max(sup, std::abs(exact_dp(ctx, obs, p, suffix)));
    }
    out.sup_dp[p] = sup;
  }

  std::vector<double> xs, ys;
  for (std::size_t p = 0; p < span; ++p)
    if (out.sup_dp[p] > 1e-15) {
      xs.push_back(static_cast<double>(p));
      ys.push_back(std::log(out.sup_dp[p]));
    }
  if (xs.size() < 2) {
    out.exact_zero = true;
    return out;
  }
  const LinearFit fit = linear_fit(xs, ys);
  out.c_fit = std::exp(fit.intercept);
  out.rho_fit = std::exp(fit.slope);
  return out;
}

HoeffdingAzumaReport check_hoeffding_azuma(const ExactShiftContext& ctx,
                                           std::span<const WordObservable> batch) {
  HoeffdingAzumaReport rep;
  rep.batch = batch.size();
  const auto k = static_cast<std::size_t>(ctx.shift.symbol_count);
  for (const auto& obs : batch) {
    const std::size_t span = obs.span();
    const std::size_t words = checked_pow(k, span, ctx.budget);
    const double ek = exact_expectation(ctx, obs);

    std::vector<std::uint8_t> word(span);
    double lhs = 0;
    for (std::size_t idx = 0; idx < words; ++idx) {
      const double w = weight_of(ctx, word, span, idx);
      lhs += w * std::exp(obs.eval(word) - ek);
    }

    double exponent = 0;
    std::vector<std::uint8_t> suffix(span);
    for (std::size_t p = 0; p < span; ++p) {
      const std::size_t tails = checked_pow(k, span - p, ctx.budget);
      double sup = 0;
      for (std::size_t idx = 0; idx < tails; ++idx) {
        weight_of(ctx, suffix, span - p, idx);
        sup = std::max(sup, std::abs(exact_dp(ctx, obs, p,
                                              std::span<const std::uint8_t>(suffix.data(), span - p))));
      }
      exponent += sup * sup;
    }
    rep.worst_ratio = std::max(rep.worst_ratio, lhs / std::exp(exponent));
  }
  rep.passed = rep.worst_ratio <= 1.0;
  return rep;
}

WordObservable random_word_observable(const ShiftSystem& sys, std::size_t arity,
                                      RngStream& rng, double amplitude) {
  const auto k = static_cast<std::size_t>(sys.symbol_count);
  std::vector<std::vector<double>> tables(arity, std::vector<double>(k));
  WordObservable obs;
  obs.arity = arity;
  obs.sight = 1;
  obs.lip.resize(arity);
  for (std::size_t j = 0; j < arity; ++j) {
    const double amp = amplitude * rng.next_double();
    double lo = 1e300, hi = -1e300;
    for (std::size_t s = 0; s < k; ++s) {
      tables[j][s] = amp * (2.0 * rng.next_double() - 1.0);
      lo = std::min(lo, tables[j][s]);
      hi = std::max(hi, tables[j][s]);
    }
    obs.lip[j] = hi - lo;
  }
  obs.label = "random-sum";
  obs.eval = [tables = std::move(tables)](std::span<const std::uint8_t> w) {
    double s = 0;
    for (std::size_t j = 0; j < tables.size(); ++j) s += tables[j][w[j]];
    return s;
  };
  return obs;
}

WordObservable distance_probe(const ShiftSystem& sys, std::size_t coord,
                              std::vector<std::uint8_t> target, std::size_t cap) {
  if (target.size() < cap) throw std::invalid_argument("target word shorter than cap");
  WordObservable obs;
  obs.arity = coord + 1;
  obs.sight = cap;
  obs.lip.assign(coord + 1, 0.0);
  obs.lip[coord] = 1.0;
  obs.label = "distance-probe";
  const double beta = sys.beta;
  obs.eval = [coord, cap, beta, target = std::move(target)](std::span<const std::uint8_t> w) {
    std::size_t s = 0;
    while (s < cap && w[coord + s] == target[s]) ++s;
    return std::pow(beta, static_cast<double>(s));
  };
  return obs;
}

std::vector<double> kp_integral_gap(const ExactShiftContext& ctx, const WordObservable& obs,
                                    std::size_t p_max, std::size_t suffix_samples,
                                    std::uint64_t seed) {
  std::size_t nonzero = 0, coord = 0;
  for (std::size_t j = 0; j < obs.lip.size(); ++j)
    if (obs.lip[j] > 0) {
      ++nonzero;
      coord = j;
    }
  if (nonzero != 1)
    throw std::invalid_argument("kp_integral_gap expects a single-coordinate probe");

  const double ek = exact_expectation(ctx, obs);
  std::vector<double> gaps(p_max + 1, 0.0);
  std::vector<std::uint8_t> suffix(obs.span());
  for (std::size_t p = 0; p <= p_max; ++p) {
    if (p <= coord) continue;  // K is F_p-measurable: the gap vanishes
    double sup = 0;
    for (std::size_t t = 0; t < suffix_samples; ++t) {
      RngStream rng = RngStream::substream(seed ^ (0xa7ULL + p), t);
      for (auto& s : suffix)
        s = static_cast<std::uint8_t>(sample_categorical(rng, ctx.shift.probs));
      sup = std::max(sup, std::abs(exact_kp(ctx, obs, p, suffix) - ek));
    }
    gaps[p] = sup;
  }
  return gaps;
}

}  // namespace towerlab
