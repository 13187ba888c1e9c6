// Acceptance suite: one line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "towerlab/concentration.hpp"
#include "towerlab/dynamics.hpp"
#include "towerlab/martingale.hpp"
#include "towerlab/observables.hpp"
#include "towerlab/seqcalc.hpp"
#include "towerlab/stats.hpp"
#include "towerlab/tower.hpp"
#include "towerlab/transfer.hpp"

using namespace towerlab;
namespace fs = std::filesystem;

namespace {

int failures = 0;

struct Criterion {
  int id;
  std::string name;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double budget_s;
  bool ok = true;
  std::string detail;

  Criterion(int i, std::string n, double budget) : id(i), name(std::move(n)), budget_s(budget) {}

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }

  void finish() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > budget_s) {
      ok = false;
      char buf[64];
      std::snprintf(buf, sizeof buf, "runtime %.1fs over budget %.0fs", secs, budget_s);
      if (!detail.empty()) detail += "; ";
      detail += buf;
    }
    std::printf("%s  [%2d] %-34s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", id, name.c_str(), secs,
                detail.empty() ? "" : "  -- ", detail.c_str());
    std::fflush(stdout);
    failures += !ok;
  }
};

// --------------------------------------------------------------------------

void criterion_1_martingale() {
  Criterion c(1, "exact martingale suite", 30);
  ExactShiftContext ctx;
  ctx.shift = ShiftSystem::bernoulli({0.5, 0.5});
  RngStream rng(20260808);
  double worst_mart = 0, worst_tel = 0;
  std::vector<WordObservable> batch;
  for (int i = 0; i < 100; ++i) {
    const std::size_t arity = 6 + rng.next_below(5);  // arities up to 10
    batch.push_back(random_word_observable(ctx.shift, arity, rng));
    const auto& obs = batch.back();
    std::vector<std::uint8_t> word(obs.span());
    for (auto& s : word) s = static_cast<std::uint8_t>(rng.next_below(2));
    for (std::size_t p = 0; p + 1 < obs.span(); ++p)
      worst_mart = std::max(worst_mart,
                            std::abs(martingale_residual(
                                ctx, obs, p, std::span<const std::uint8_t>(word).subspan(p + 1))));
    worst_tel = std::max(worst_tel, std::abs(telescoping_residual(ctx, obs, word)));
  }
  const auto ha = check_hoeffding_azuma(ctx, batch);
  c.expect(worst_mart < 1e-12, "reverse-martingale residual " + std::to_string(worst_mart));
  c.expect(worst_tel < 1e-12, "telescoping residual " + std::to_string(worst_tel));
  c.expect(ha.worst_ratio <= 1.0, "Hoeffding-Azuma ratio " + std::to_string(ha.worst_ratio));
  c.finish();
}

void criterion_2_renewal_identity() {
  Criterion c(2, "renewal identity", 10);
  double worst = 0;
  {
    TowerSpec single;
    single.cells = {{1.0, 1}};
    single.p0 = {{1.0}};
    single.tail = {TailKind::Exponential, 1.0};
    single.validate();
    worst = std::max(worst, check_decomposition(single, 20));
  }
  {
    TowerSpec two;
    two.cells = {{0.5, 1}, {0.5, 2}};
    two.p0 = {{0.5, 0.5}, {0.5, 0.5}};
    two.tail = {TailKind::Exponential, 1.0};
    two.validate();
    worst = std::max(worst, check_decomposition(two, 20));
  }
  worst = std::max(worst, check_decomposition(build_tower({TailKind::Polynomial, 2.0}, 50, 0), 20));
  worst = std::max(worst, check_decomposition(build_tower({TailKind::Polynomial, 2.0}, 50, 33), 20));
  worst = std::max(worst, check_decomposition(build_tower({TailKind::Exponential, 1.0}, 50, 7), 20));
  worst = std::max(worst, check_decomposition(build_tower({TailKind::WeakPolynomial, 2.5}, 40, 5), 16));
  c.expect(worst < 1e-10, "residual " + std::to_string(worst));
  c.finish();
}

void criterion_3_decay_diagnostics() {
  Criterion c(3, "operator decay diagnostics", 60);
  const auto ediag = decay_diagnostics(build_tower({TailKind::Exponential, 1.0}, 24, 0), 1 << 12);
  c.expect(ediag.log_norm_fit.slope < 0.0, "exponential slope not negative");
  c.expect(ediag.log_norm_fit.r2 >= 0.99,
           "exponential fit r2 " + std::to_string(ediag.log_norm_fit.r2));
  // 128 cells keeps the polynomial regime visible through n ~ max phi while
  // the truncated chain's geometric tail settles the partial sums well
  // inside the trailing decade.
  const auto pdiag = decay_diagnostics(build_tower({TailKind::Polynomial, 2.0}, 128, 0), 1 << 12);
  c.expect(pdiag.diff_moment_stability.stable,
           "diff partial sums rel increment " +
               std::to_string(pdiag.diff_moment_stability.rel_increment));
  c.finish();
}

void criterion_4_psi_lemma() {
  Criterion c(4, "visit-count integral (operator vs MC)", 60);
  const auto spec = build_tower({TailKind::Polynomial, 2.0}, 48, 0);
  const auto r = first_return_ops(spec, spec.max_return_time());
  const auto u = renewal_U(r, spec, spec.rho, 32);

  std::vector<double> lx, ly;
  for (int n = 4; n <= 32; ++n) {
    const double v = full_psi_integral(spec, u, n);
    if (v > 0) {
      lx.push_back(std::log(n));
      ly.push_back(std::log(v));
    }
  }
  const auto fit = linear_fit(lx, ly);
  c.expect(-fit.slope >= spec.tail.param - 0.3,
           "decay exponent " + std::to_string(-fit.slope));

  for (int n : {4, 8, 12, 16, 24}) {
    const double op = full_psi_integral(spec, u, n);
    const auto mc = full_psi_integral_mc(spec, n, 1'000'000, 813 + n, 2);
    c.expect(std::abs(mc.value - op) <= 3.0 * mc.std_error + 1e-12,
             "MC mismatch at n=" + std::to_string(n));
  }
  c.finish();
}

void criterion_5_return_tails() {
  Criterion c(5, "intermittent return-time tails", 120);
  for (double alpha : {0.3, 0.5}) {
    const auto fit = return_time_tail_exponent(IntermittentMap(alpha), 1'000'000, 90210);
    const double target = 1.0 / alpha + 1.0;
    c.expect(std::abs(fit.exponent - target) <= 0.15,
             "alpha=" + std::to_string(alpha) + " exponent " + std::to_string(fit.exponent));
  }
  c.finish();
}

void criterion_6_concentration_regimes() {
  Criterion c(6, "concentration regimes", 300);
  {
    DeviationExperiment exp;
    exp.map = DoublingMap{};
    exp.obs = birkhoff([](double x) { return std::cos(2 * M_PI * x); }, 2 * M_PI, 1 << 10, "cos");
    exp.trials = 10'000;
    exp.master_seed = 61;
    exp.threads = 2;
    const auto rep = run_deviation(exp);
    c.expect(rep.fit_window_points >= 4, "too few window points (doubling)");
    c.expect(rep.exp_fit.slope < 0.0, "exp-fit slope not negative");
    c.expect(rep.exp_fit.r2 >= 0.95, "exp-fit r2 " + std::to_string(rep.exp_fit.r2));
  }
  {
    DeviationExperiment exp;
    exp.map = IntermittentMap(0.4);
    exp.obs = birkhoff([](double x) { return std::cos(2 * M_PI * x); }, 2 * M_PI, 1 << 10, "cos");
    exp.trials = 10'000;
    exp.master_seed = 62;
    exp.burn_in = 10'000;
    exp.threads = 2;
    const auto rep = run_deviation(exp);
    c.expect(rep.fit_window_points >= 4, "too few window points (intermittent)");
    c.expect(-rep.poly_fit.slope >= 2.0,
             "poly exponent certificate " + std::to_string(-rep.poly_fit.slope));
  }
  c.finish();
}

void criterion_7_kantorovich_rates() {
  Criterion c(7, "empirical-measure rates", 300);
  const std::size_t trials = 200;
  auto mean_dn_curve = [&](const IntervalMap& map, const PiecewiseLinearCdf& ref,
                           std::uint64_t seed) {
    std::vector<double> log_n, log_d;
    for (int k = 8; k <= 16; ++k) {
      const std::size_t n = std::size_t{1} << k;
      std::vector<double> vals(trials);
      run_indexed_tasks(trials, 2, [&](std::size_t i) {
        RngStream rng = RngStream::substream(seed ^ (0xD1ULL * n), i);
        auto orbit = sample_stationary_orbit(map, rng, n, 10'000);
        std::sort(orbit.begin(), orbit.end());
        vals[i] = kantorovich_1d(orbit, ref);
      });
      log_n.push_back(std::log(static_cast<double>(n)));
      log_d.push_back(std::log(mean(vals)));
    }
    return linear_fit(log_n, log_d);
  };

  const auto dfit = mean_dn_curve(DoublingMap{}, PiecewiseLinearCdf::uniform(), 71);
  c.expect(dfit.slope >= -0.55 && dfit.slope <= -0.40,
           "doubling slope " + std::to_string(dfit.slope));

  const auto ul = ulam_build(IntermittentMap(0.3), 1 << 13);
  const auto ifit = mean_dn_curve(IntermittentMap(0.3),
                                  PiecewiseLinearCdf::from_density(ul.density), 72);
  c.expect(ifit.slope <= -0.25, "intermittent slope " + std::to_string(ifit.slope));
  c.finish();
}

void criterion_8_periodogram() {
  Criterion c(8, "integrated periodogram", 120);
  // Closed form vs independent composite Gauss-Legendre quadrature.
  RngStream rng(81);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 8 + rng.next_below(249);
    std::vector<double> f(n);
    for (auto& v : f) v = 2.0 * rng.next_double() - 1.0;
    const double omega = 0.1 + 6.1 * rng.next_double();
    auto g = [&](double s) {
      double re = 0, im = 0;
      for (std::size_t j = 0; j < n; ++j) {
        re += f[j] * std::cos(static_cast<double>(j) * s);
        im -= f[j] * std::sin(static_cast<double>(j) * s);
      }
      return (re * re + im * im) / static_cast<double>(n);
    };
    static const double nodes[7] = {-0.9491079123427585, -0.7415311855993945,
                                    -0.4058451513773972, 0.0, 0.4058451513773972,
                                    0.7415311855993945,  0.9491079123427585};
    static const double wts[7] = {0.1294849661688697, 0.2797053914892766,
                                  0.3818300505051189, 0.4179591836734694,
                                  0.3818300505051189, 0.2797053914892766,
                                  0.1294849661688697};
    const int panels = static_cast<int>(4 * n);
    const double h = omega / panels;
    double quad = 0;
    for (int p = 0; p < panels; ++p) {
      const double mid = (p + 0.5) * h;
      double acc = 0;
      for (int i = 0; i < 7; ++i) acc += wts[i] * g(mid + 0.5 * h * nodes[i]);
      quad += acc * 0.5 * h;
    }
    worst = std::max(worst, std::abs(integrated_periodogram(f, omega) - quad));
  }
  c.expect(worst < 1e-8, "closed-form vs quadrature " + std::to_string(worst));

  // Doubling with f = cos(2 pi x): limit curve J(omega) = omega / 2.
  const std::size_t n = 1 << 14;
  std::vector<double> gaps(64);
  run_indexed_tasks(64, 2, [&](std::size_t i) {
    RngStream orng = RngStream::substream(82, i);
    const auto orbit = sample_stationary_orbit(DoublingMap{}, orng, n, 0);
    std::vector<double> f(n);
    for (std::size_t j = 0; j < n; ++j) f[j] = std::cos(2 * M_PI * orbit[j]);
    std::vector<double> cref{0.5};
    gaps[i] = sup_periodogram_gap(f, cref, 256).gap;
  });
  const double mean_gap = mean(gaps);
  c.expect(mean_gap <= 0.05, "mean sup gap " + std::to_string(mean_gap));
  c.finish();
}

void criterion_9_sequence_calculus() {
  Criterion c(9, "sequence calculus and weight systems", 10);
  RngStream rng(91);
  std::size_t violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = 8 + rng.next_below(120);
    std::vector<double> m(len);
    const double decay = 0.4 + 0.55 * rng.next_double();
    for (std::size_t k = 0; k < len; ++k)
      m[k] = rng.next_double() * std::pow(decay, static_cast<double>(k));
    WeightSystem u(trial % 2 == 0 ? WeightKind::Direct : WeightKind::WindowAverage, m);
    for (std::size_t mm = 1; mm < len; ++mm)
      if (weight_sum_over_r(u, mm) > u.sigma() * (1.0 + 1e-12)) ++violations;

    MomentSeq cs;
    cs.moment_q = 1.0;
    cs.values.assign(1024, 0.0);
    const double cdecay = 0.3 + 0.55 * rng.next_double();
    for (std::size_t i = 0; i < cs.values.size(); ++i)
      cs.values[i] = rng.next_double() * std::pow(cdecay, static_cast<double>(i));
    const auto v = build_weight_v(u, cs);
    for (std::size_t k = 2; k <= 64; ++k)
      for (std::size_t s = 1; s < k; ++s)
        if (weight_convolution_lhs(u, cs.values, s, k) > v.u(s, k) * (1.0 + 1e-12))
          ++violations;
  }
  c.expect(violations == 0, std::to_string(violations) + " violations");
  c.finish();
}

void criterion_10_appendix_mc() {
  Criterion c(10, "appendix estimate Monte Carlo", 120);
  const auto spec = build_tower({TailKind::Polynomial, 2.0}, 48, 0);
  RngStream rng(101);
  std::vector<double> ratios;
  double scale_residual = 0;
  for (int p = 0; p < 50; ++p) {
    std::vector<double> weights(16);
    double norm2 = 0;
    for (auto& w : weights) {
      w = 0.1 + rng.next_double();
      norm2 += w * w;
    }
    for (auto& w : weights) w /= std::sqrt(norm2);
    const auto rep = technical_theorem_mc(spec, weights, 4000, 96, 1000 + p, 2);
    std::vector<double> scaled(weights);
    for (auto& w : scaled) w *= 2.5;
    const auto rep2 = technical_theorem_mc(spec, scaled, 4000, 96, 1000 + p, 2);
    scale_residual = std::max(scale_residual,
                              std::abs(rep2.ratio - rep.ratio) / std::max(rep.ratio, 1e-300));
    ratios.push_back(rep.ratio);
  }
  const double lo = *std::min_element(ratios.begin(), ratios.end());
  const double hi = *std::max_element(ratios.begin(), ratios.end());
  const double mid = mean(ratios);
  c.expect(scale_residual <= 1e-10, "homogeneity residual " + std::to_string(scale_residual));
  c.expect(hi <= 1.2 * mid && lo >= 0.8 * mid,
           "ratio spread [" + std::to_string(lo / mid) + ", " + std::to_string(hi / mid) + "]");
  c.finish();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_11_determinism() {
  Criterion c(11, "thread-count determinism", 600);
  const fs::path work = fs::temp_directory_path() / "towerlab-acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::vector<std::string> runs = {
      "deviation --seed 11 --set experiment.trials=2000 --set observable.n=512",
      "operator-diagnostics --seed 12 --set system.cells=24 --set experiment.n_max=512 "
      "--set experiment.psi_mc_samples=50000",
      "martingale-verify --seed 13 --set experiment.batch=30",
      "seq-check --seed 14 --set experiment.instances=100",
      "appendix-mc --seed 15 --set experiment.profiles=4 --set experiment.trials=500 "
      "--set system.cells=24",
      "estimator --seed 16 --set observable.kind=kantorovich --set experiment.trials=50 "
      "--set experiment.n_list=[256,1024,4096]",
  };
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const fs::path o1 = work / ("t1_" + std::to_string(i));
    const fs::path o8 = work / ("t8_" + std::to_string(i));
    const std::string base = std::string(TOWERLAB_CLI_PATH) + " " + runs[i];
    const int rc1 = std::system((base + " --threads 1 --out " + o1.string() + " 2>/dev/null").c_str());
    const int rc8 = std::system((base + " --threads 8 --out " + o8.string() + " 2>/dev/null").c_str());
    c.expect(WEXITSTATUS(rc1) == 0 && WEXITSTATUS(rc8) == 0,
             "run " + std::to_string(i) + " failed");
    c.expect(slurp(o1 / "report.json") == slurp(o8 / "report.json"),
             "reports differ for run " + std::to_string(i));
  }
  c.finish();
}

}  // namespace

int main() {
  std::printf("towerlab acceptance suite\n");
  criterion_1_martingale();
  criterion_2_renewal_identity();
  criterion_3_decay_diagnostics();
  criterion_4_psi_lemma();
  criterion_5_return_tails();
  criterion_6_concentration_regimes();
  criterion_7_kantorovich_rates();
  criterion_8_periodogram();
  criterion_9_sequence_calculus();
  criterion_10_appendix_mc();
  criterion_11_determinism();
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 2;
}
