#include <doctest.h>

#include <cmath>

#include "towerlab/martingale.hpp"

using namespace towerlab;

namespace {

ExactShiftContext fair_coin_ctx() {
  ExactShiftContext ctx;
  ctx.shift = ShiftSystem::bernoulli({0.5, 0.5});
  return ctx;
}

// K = value of symbol at coordinate `coord` as a 0/1 real.
WordObservable symbol_probe(std::size_t coord) {
  WordObservable obs;
  obs.arity = coord + 1;
  obs.sight = 1;
  obs.lip.assign(coord + 1, 0.0);
  obs.lip[coord] = 1.0;
  obs.label = "symbol";
  obs.eval = [coord](std::span<const std::uint8_t> w) {
    return static_cast<double>(w[coord]);
  };
  return obs;
}

}  // namespace

TEST_CASE("exact conditional expectations") {
  const auto ctx = fair_coin_ctx();
  const auto k0 = symbol_probe(0);

  // p = 0 evaluates the suffix itself.
  std::vector<std::uint8_t> suffix{1, 0, 1};
  CHECK(exact_kp(ctx, k0, 0, suffix) == 1.0);

  // F_p-measurable K is untouched for p <= coordinate.
  const auto k2 = symbol_probe(2);
  std::vector<std::uint8_t> s2{1, 1, 0, 1};
  CHECK(exact_kp(ctx, k2, 0, s2) == 0.0);

  // One conditioning step on Bernoulli(q) averages the first symbol.
  ExactShiftContext biased;
  biased.shift = ShiftSystem::bernoulli({0.3, 0.7});
  for (auto suf : {std::vector<std::uint8_t>{0, 0}, std::vector<std::uint8_t>{1, 1}})
    CHECK(exact_kp(biased, k0, 1, suf) == doctest::Approx(0.7));

  ExactShiftContext tiny = fair_coin_ctx();
  tiny.budget = 16;
  const auto wide = symbol_probe(9);
  CHECK_THROWS_AS(exact_kp(tiny, wide, 10, {}), std::invalid_argument);
}

TEST_CASE("martingale differences: constants vanish, identities hold exactly") {
  const auto ctx = fair_coin_ctx();
  WordObservable constant;
  constant.arity = 4;
  constant.sight = 1;
  constant.lip.assign(4, 0.0);
  constant.eval = [](std::span<const std::uint8_t>) { return 3.25; };
  std::vector<std::uint8_t> suffix{0, 1, 0, 1};
  for (std::size_t p = 0; p < 4; ++p)
    CHECK(exact_dp(ctx, constant, p, std::span<const std::uint8_t>(suffix).subspan(
                                         std::min<std::size_t>(p, 3))) == 0.0);

  // K = x_0: D_p = 0 for p >= 1.
  const auto k0 = symbol_probe(0);
  std::vector<std::uint8_t> s{1, 1, 0};
  CHECK(exact_dp(ctx, k0, 1, s) == 0.0);
  CHECK(exact_dp(ctx, k0, 2, s) == 0.0);
  CHECK(exact_dp(ctx, k0, 0, s) == doctest::Approx(0.5));  // K - E(K)

  // Reverse-martingale identity and telescoping for random observables.
  RngStream rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto obs = random_word_observable(ctx.shift, 8, rng);
    std::vector<std::uint8_t> word(obs.span());
    for (auto& sym : word) sym = static_cast<std::uint8_t>(rng.next_below(2));
    for (std::size_t p = 0; p + 1 < obs.span(); ++p) {
      const double resid = martingale_residual(
          ctx, obs, p, std::span<const std::uint8_t>(word).subspan(p + 1));
      CHECK(std::abs(resid) < 1e-12);
    }
    CHECK(std::abs(telescoping_residual(ctx, obs, word)) < 1e-12);
  }
}

TEST_CASE("tower property of conditional expectations") {
  const auto ctx = fair_coin_ctx();
  RngStream rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto obs = random_word_observable(ctx.shift, 6, rng);
    std::vector<std::uint8_t> suffix(obs.span());
    for (auto& sym : suffix) sym = static_cast<std::uint8_t>(rng.next_below(2));
    for (std::size_t p = 0; p + 1 < 6; ++p) {
      // E(K_p | F_{p+1}) = K_{p+1}, evaluated exactly.
      const auto tail = std::span<const std::uint8_t>(suffix).subspan(p + 1);
      double avg = 0;
      std::vector<std::uint8_t> withp(tail.size() + 1);
      std::copy(tail.begin(), tail.end(), withp.begin() + 1);
      for (int a = 0; a < 2; ++a) {
        withp[0] = static_cast<std::uint8_t>(a);
        avg += 0.5 * exact_kp(ctx, obs, p, withp);
      }
      CHECK(std::abs(avg - exact_kp(ctx, obs, p + 1, tail)) < 1e-12);
    }
  }
}

TEST_CASE("lemma-close probe decay") {
  const auto ctx = fair_coin_ctx();

  // K = x_0 probe: exact zero decay beyond p = 0.
  const auto fit0 = check_lemma_close(ctx, symbol_probe(0), 200, 11);
  CHECK(fit0.exact_zero);

  // Distance-to-word probe: geometric decay with rate about beta/2.
  const auto probe = distance_probe(ctx.shift, 0, std::vector<std::uint8_t>(12, 1), 12);
  const auto fit = check_lemma_close(ctx, probe, 500, 12);
  CHECK_FALSE(fit.exact_zero);
  CHECK(fit.rho_fit < 1.0);
  CHECK(fit.rho_fit < std::max(ctx.shift.beta, 0.0) + 0.05);

  // Shifted probe: decay sets in only past the carrying coordinate.
  const auto shifted = distance_probe(ctx.shift, 3, std::vector<std::uint8_t>(8, 1), 8);
  const auto sfit = check_lemma_close(ctx, shifted, 200, 13);
  for (std::size_t p = 0; p < 3; ++p) CHECK(sfit.sup_dp[p] < 1e-14);
  CHECK(sfit.sup_dp[3] > 1e-6);
  CHECK(sfit.sup_dp[6] < sfit.sup_dp[3]);
}

TEST_CASE("Kp approaches the free integral geometrically") {
  const auto ctx = fair_coin_ctx();
  const auto probe = distance_probe(ctx.shift, 0, std::vector<std::uint8_t>(10, 1), 10);
  const auto gaps = kp_integral_gap(ctx, probe, 9, 300, 21);
  std::vector<double> lx, ly;
  for (std::size_t p = 1; p <= 9; ++p)
    if (gaps[p] > 1e-14) {
      lx.push_back(static_cast<double>(p));
      ly.push_back(std::log(gaps[p]));
    }
  REQUIRE(lx.size() >= 4);
  const auto fit = linear_fit(lx, ly);
  CHECK(std::exp(fit.slope) < 1.0);

  WordObservable multi;
  multi.arity = 2;
  multi.sight = 1;
  multi.lip = {1.0, 1.0};
  multi.eval = [](std::span<const std::uint8_t> w) { return double(w[0] + w[1]); };
  CHECK_THROWS_AS(kp_integral_gap(ctx, multi, 4, 10, 1), std::invalid_argument);
}

TEST_CASE("hoeffding-azuma: hand value and random batch") {
  const auto ctx = fair_coin_ctx();

  // K = x_0 on the fair coin: lhs = cosh(1/2), sup|D_0| = 1/2.
  std::vector<WordObservable> single{symbol_probe(0)};
  const auto rep = check_hoeffding_azuma(ctx, single);
  CHECK(rep.worst_ratio == doctest::Approx(std::cosh(0.5) / std::exp(0.25)).epsilon(1e-12));
  CHECK(rep.passed);

  WordObservable constant;
  constant.arity = 3;
  constant.sight = 1;
  constant.lip.assign(3, 0.0);
  constant.eval = [](std::span<const std::uint8_t>) { return 1.0; };
  std::vector<WordObservable> cbatch{constant};
  CHECK(check_hoeffding_azuma(ctx, cbatch).worst_ratio == doctest::Approx(1.0));

  RngStream rng(9);
  std::vector<WordObservable> batch;
  for (int i = 0; i < 25; ++i) batch.push_back(random_word_observable(ctx.shift, 8, rng));
  const auto batch_rep = check_hoeffding_azuma(ctx, batch);
  CHECK(batch_rep.passed);
  CHECK(batch_rep.worst_ratio <= 1.0);
  CHECK(batch_rep.worst_ratio > 0.0);
}

TEST_CASE("context validation") {
  ExactShiftContext bad;
  bad.shift = ShiftSystem::markov_chain({{0.5, 0.5}, {0.5, 0.5}}, {0.5, 0.5});
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
