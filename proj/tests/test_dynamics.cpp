#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "towerlab/dynamics.hpp"
#include "towerlab/stats.hpp"

using namespace towerlab;

TEST_CASE("intermittent map branch values") {
  IntermittentMap m(0.5);
  CHECK(m.step(0.5) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m.step(0.75) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m.step(0.25) == doctest::Approx(0.4267766952966369).epsilon(1e-14));
  CHECK(m.step(0.0) == 0.0);
  IntermittentMap m3(0.3);
  CHECK(m3.step(0.75) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m3.step(0.5) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("intermittent map rejects boundary exponents and bad states") {
  CHECK_THROWS_AS(IntermittentMap(0.0), std::invalid_argument);
  CHECK_THROWS_AS(IntermittentMap(1.0), std::invalid_argument);
  IntermittentMap m(0.4);
  CHECK_THROWS_AS(m.step(-0.01), std::domain_error);
  CHECK_THROWS_AS(m.step(1.01), std::domain_error);
  CHECK_NOTHROW(m.step(1.0 + 1e-16));
}

TEST_CASE("intermittent branch continuity and monotonicity") {
  IntermittentMap m(0.5);
  CHECK(m.step(0.5) == doctest::Approx(1.0));
  CHECK(m.step(std::nextafter(0.5, 1.0)) == doctest::Approx(0.0).epsilon(1e-12));
  double prev_left = 0.0, prev_right = 0.0;
  bool left_monotone = true, right_monotone = true;
  for (int i = 1; i <= 10000; ++i) {
    const double xl = 0.5 * i / 10000.0;
    const double xr = 0.5 + 0.5 * i / 10000.0;
    const double yl = m.step(xl), yr = m.step(xr);
    if (yl < prev_left) left_monotone = false;
    if (yr < prev_right) right_monotone = false;
    prev_left = yl;
    prev_right = yr;
  }
  CHECK(left_monotone);
  CHECK(right_monotone);
}

TEST_CASE("doubling orbit arithmetic") {
  const auto orbit = generate_orbit(DoublingMap{}, 0.2, 3);
  REQUIRE(orbit.size() == 3);
  CHECK(orbit[0] == 0.2);
  CHECK(orbit[1] == 0.4);
  CHECK(orbit[2] == 0.8);
}

TEST_CASE("intermittent orbit follows the map") {
  const auto orbit = generate_orbit(IntervalMap{IntermittentMap(0.5)}, 0.75, 2);
  CHECK(orbit[0] == 0.75);
  CHECK(orbit[1] == doctest::Approx(0.5));
}

TEST_CASE("orbits are bit-deterministic per seed") {
  RngStream a = RngStream::substream(42, 7);
  RngStream b = RngStream::substream(42, 7);
  const auto o1 = sample_stationary_orbit(DoublingMap{}, a, 200, 0);
  const auto o2 = sample_stationary_orbit(DoublingMap{}, b, 200, 0);
  CHECK(o1 == o2);
  RngStream c = RngStream::substream(42, 8);
  CHECK(sample_stationary_orbit(DoublingMap{}, c, 200, 0) != o1);
}

TEST_CASE("stationary doubling orbit respects the dynamics and the measure") {
  RngStream rng(11);
  const auto orbit = sample_stationary_orbit(DoublingMap{}, rng, 5000, 0);
  DoublingMap dm;
  for (std::size_t k = 0; k + 1 < 100; ++k)
    CHECK(std::abs(dm.step(orbit[k]) - orbit[k + 1]) < 1e-12);
  double m = 0;
  for (double x : orbit) m += x;
  m /= static_cast<double>(orbit.size());
  CHECK(std::abs(m - 0.5) < 0.05);  // no dyadic collapse over long horizons
  double tail_mean = 0;
  for (std::size_t k = 4000; k < 5000; ++k) tail_mean += orbit[k];
  CHECK(tail_mean / 1000.0 > 0.2);
}

TEST_CASE("first return time basics") {
  IntermittentMap m(0.5);
  CHECK(first_return_time(m, 0.75) == 1);
  IntermittentMap m2(0.3);
  CHECK(first_return_time(m2, 0.75) == 1);
  // Replay oracle: the return step count matches a hand-rolled orbit walk.
  const double x = 0.51;
  const std::uint64_t rt = first_return_time(m, x);
  double y = m.step(x);
  std::uint64_t steps = 1;
  while (y < 0.5) {
    y = m.step(y);
    ++steps;
  }
  CHECK(rt == steps);
  CHECK(rt > 1);
}

TEST_CASE("return time cap converts stalls into errors") {
  IntermittentMap m(0.5);
  double trapped = 0.5 + 1e-14;  // maps just above 0, then crawls for ages
  CHECK_THROWS_AS(first_return_time(m, trapped, 100), std::runtime_error);
}

TEST_CASE("return-time tail exponent approximates 1/alpha + 1") {
  // 10^5 draws keeps this fast; the acceptance suite runs the 10^6 version
  // at the +-0.15 tolerance.
  for (double alpha : {0.4, 0.5}) {
    const auto fit = return_time_tail_exponent(IntermittentMap(alpha), 100000, 91);
    CHECK(std::abs(fit.exponent - (1.0 / alpha + 1.0)) < 0.3);
    CHECK(fit.points >= 5);
  }
}

TEST_CASE("invariant sampling: doubling uniform, intermittent density slope") {
  RngStream rng(5);
  const double d = sample_invariant(DoublingMap{}, rng, 0);
  CHECK(d >= 0.0);
  CHECK(d < 1.0);
  RngStream r2(5);
  CHECK(sample_invariant(DoublingMap{}, r2, 0) == d);

  // Histogram slope of a long orbit near zero ~ -alpha.
  const double alpha = 0.3;
  RngStream r3(17);
  const auto orbit = sample_stationary_orbit(IntermittentMap(alpha), r3, 2'000'000, 10'000);
  const int bins = 2000;
  std::vector<double> hist(bins, 0.0);
  for (double x : orbit) {
    int b = std::min(bins - 1, static_cast<int>(x * bins));
    hist[static_cast<std::size_t>(b)] += 1.0;
  }
  std::vector<double> lx, ly;
  for (int b = 2; b < 200; ++b) {  // x in [1e-3, 1e-1]
    if (hist[static_cast<std::size_t>(b)] > 0) {
      lx.push_back(std::log((b + 0.5) / bins));
      ly.push_back(std::log(hist[static_cast<std::size_t>(b)]));
    }
  }
  const auto fit = linear_fit(lx, ly);
  // The density's regular part contributes curvature over this window, so
  // the tolerance is wider than the pure-power ideal.
  CHECK(std::abs(fit.slope + alpha) < 0.12);
}

TEST_CASE("shift systems validate and sample") {
  CHECK_THROWS_AS(ShiftSystem::bernoulli({0.6, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(ShiftSystem::bernoulli({0.5, 0.5}, 1.0), std::invalid_argument);
  const auto sys = ShiftSystem::bernoulli({0.5, 0.5});

  ShiftState st = sample_shift_state(sys, RngStream(3), 64);
  CHECK(st.word.size() == 64);
  const auto orbit = generate_shift_orbit(sys, st, 3);
  REQUIRE(orbit.size() == 3);
  // Left shift: window k+1 begins with the tail of window k.
  CHECK(std::equal(orbit[0].begin() + 1, orbit[0].end(), orbit[1].begin()));
  CHECK(std::equal(orbit[1].begin() + 1, orbit[1].end(), orbit[2].begin()));

  // Symbol frequencies within 3 sigma binomial bands.
  const std::size_t n = 100000;
  ShiftState big = sample_shift_state(sys, RngStream(4), n);
  std::size_t ones = 0;
  for (auto s : big.word) ones += s;
  const double p = static_cast<double>(ones) / n;
  CHECK(std::abs(p - 0.5) < 3.0 * std::sqrt(0.25 / n));
}

TEST_CASE("markov shift stationarity is enforced") {
  std::vector<std::vector<double>> rows{{0.9, 0.1}, {0.2, 0.8}};
  std::vector<double> pi{2.0 / 3.0, 1.0 / 3.0};
  CHECK_NOTHROW(ShiftSystem::markov_chain(rows, pi));
  CHECK_THROWS_AS(ShiftSystem::markov_chain(rows, {0.5, 0.5}), std::invalid_argument);
}
