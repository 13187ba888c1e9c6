#include "towerlab/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

namespace towerlab {

namespace {

// Induced-map transfer kernel K[a', a] = law[a] p0[a][a'] / law[a'], so that
// K 1 = 1 by stationarity of the base law.
Eigen::MatrixXd induced_kernel(const TowerSpec& spec) {
  const auto law = spec.base_law();
  const std::size_t n = spec.n_cells();
  Eigen::MatrixXd k(n, n);
  for (std::size_t ap = 0; ap < n; ++ap)
    for (std::size_t a = 0; a < n; ++a)
      k(ap, a) = law[a] * spec.p0[a][ap] / law[ap];
  return k;
}

// Flat index for the (cell, level) basis, columns ordered by cell.
struct LevelIndex {
  std::vector<std::size_t> offset;
  std::size_t total = 0;

  explicit LevelIndex(const TowerSpec& spec) {
    offset.resize(spec.n_cells());
    for (std::size_t a = 0; a < spec.n_cells(); ++a) {
      offset[a] = total;
      total += static_cast<std::size_t>(spec.cells[a].return_time);
    }
  }
  std::size_t operator()(std::size_t cell, int level) const {
    return offset[cell] + static_cast<std::size_t>(level);
  }
};

// One renewal step M_n = factor * sum_j R_j M_{n-j} using the rank structure
// of the R family: column a of R_{phi(a)} equals column a of the induced
// kernel, so the sum collapses to K * V with V[a,:] = M_{n-phi(a)}[a,:].
Eigen::MatrixXd renewal_step(const TowerSpec& spec, const Eigen::MatrixXd& kernel,
                             const std::vector<Eigen::MatrixXd>& history, std::size_t n,
                             double factor) {
  const std::size_t dim = spec.n_cells();
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t a = 0; a < dim; ++a) {
    const std::size_t phi = static_cast<std::size_t>(spec.cells[a].return_time);
    if (phi > n) continue;
    v.row(a) = history[n - phi].row(a);
  }
  return factor * (kernel * v);
}

}  // namespace

double sup_operator_norm(const Eigen::MatrixXd& m) {
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

OperatorSeq first_return_ops(const TowerSpec& spec, int j_max) {
  if (j_max < 1) throw std::invalid_argument("first_return_ops needs j_max >= 1");
  const Eigen::MatrixXd kernel = induced_kernel(spec);
  const std::size_t dim = spec.n_cells();
  OperatorSeq seq;
  seq.role = 'R';
  seq.mats.assign(static_cast<std::size_t>(j_max) + 1, Eigen::MatrixXd::Zero(dim, dim));
  for (std::size_t a = 0; a < dim; ++a) {
    const int phi = spec.cells[a].return_time;
    if (phi <= j_max) seq.mats[static_cast<std::size_t>(phi)].col(a) = kernel.col(a);
  }
  // Truncation accounting: (sum_j R_j) 1 should be 1 componentwise.
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(dim);
  Eigen::VectorXd image = Eigen::VectorXd::Zero(dim);
  for (const auto& r : seq.mats) image += r * ones;
  if (image.minCoeff() < 1.0 - 1e-6)
    std::fprintf(stderr, "first_return_ops: truncation at j_max=%d drops mass %.3e\n", j_max,
                 1.0 - image.minCoeff());
  return seq;
}

namespace {

// The recursions only ever apply R through sum_j R_j, whose column a is the
// column of R_{phi(a)} (one return time per cell).
Eigen::MatrixXd collapse_r_family(const OperatorSeq& R) {
  if (R.mats.empty()) throw std::invalid_argument("empty R family");
  Eigen::MatrixXd kernel = R.mats[0];
  for (std::size_t j = 1; j < R.mats.size(); ++j) kernel += R.mats[j];
  return kernel;
}

OperatorSeq renewal_recursion(const OperatorSeq& R, const TowerSpec& spec, int n_max,
                              double factor, char role) {
  const std::size_t dim = spec.n_cells();
  const Eigen::MatrixXd kernel = collapse_r_family(R);
  OperatorSeq seq;
  seq.role = role;
  seq.mats.reserve(static_cast<std::size_t>(n_max) + 1);
  seq.mats.push_back(Eigen::MatrixXd::Identity(dim, dim));
  for (int n = 1; n <= n_max; ++n)
    seq.mats.push_back(renewal_step(spec, kernel, seq.mats, static_cast<std::size_t>(n), factor));
  return seq;
}

}  // namespace

OperatorSeq renewal_T(const OperatorSeq& R, const TowerSpec& spec, int n_max) {
  return renewal_recursion(R, spec, n_max, 1.0, 'T');
}

OperatorSeq renewal_U(const OperatorSeq& R, const TowerSpec& spec, double rho, int n_max) {
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("renewal_U needs rho in (0,1]");
  return renewal_recursion(R, spec, n_max, rho, 'U');
}

OperatorSeq boundary_ops(const TowerSpec& spec, int b_max) {
  const LevelIndex idx(spec);
  const std::size_t dim = spec.n_cells();
  const auto law = spec.base_law();
  OperatorSeq seq;
  seq.role = 'B';
  seq.mats.assign(static_cast<std::size_t>(b_max) + 1,
                  Eigen::MatrixXd::Zero(dim, idx.total));
  // B_0: restriction to base coordinates.
  for (std::size_t a = 0; a < dim; ++a) seq.mats[0](a, idx(a, 0)) = 1.0;
  // B_b, b >= 1: mass from level phi(a) - b (>= 1) lands in base cell a' with
  // kernel weight law[a] p0[a][a'] / law[a'].
  for (int b = 1; b <= b_max; ++b) {
    auto& m = seq.mats[static_cast<std::size_t>(b)];
    for (std::size_t a = 0; a < dim; ++a) {
      const int phi = spec.cells[a].return_time;
      if (phi <= b) continue;
      const std::size_t col = idx(a, phi - b);
      for (std::size_t ap = 0; ap < dim; ++ap)
        m(ap, col) = law[a] * spec.p0[a][ap] / law[ap];
    }
  }
  return seq;
}

double check_decomposition(const TowerSpec& spec, int n) {
  const LevelIndex idx(spec);
  const std::size_t dim = spec.n_cells();
  const auto law = spec.base_law();

  // Full chain transfer kernel on the (cell, level) basis, sparse.
  Eigen::SparseMatrix<double> chain(idx.total, idx.total);
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t a = 0; a < dim; ++a) {
    const int phi = spec.cells[a].return_time;
    for (int l = 1; l < phi; ++l) trips.emplace_back(idx(a, l), idx(a, l - 1), 1.0);
    for (std::size_t ap = 0; ap < dim; ++ap) {
      const double w = law[a] * spec.p0[a][ap] / law[ap];
      if (w != 0.0) trips.emplace_back(idx(ap, 0), idx(a, phi - 1), w);
    }
  }
  chain.setFromTriplets(trips.begin(), trips.end());

  // Oracle side: base-row restriction of the n-step kernel by direct products.
  Eigen::MatrixXd oracle = Eigen::MatrixXd::Zero(dim, idx.total);
  for (std::size_t a = 0; a < dim; ++a) oracle(a, idx(a, 0)) = 1.0;
  for (int k = 0; k < n; ++k) oracle = oracle * chain;

  // Renewal side.
  const auto R = first_return_ops(spec, spec.max_return_time());
  const auto T = renewal_T(R, spec, n);
  const auto B = boundary_ops(spec, n);
  Eigen::MatrixXd assembled = Eigen::MatrixXd::Zero(dim, idx.total);
  for (int k = 0; k <= n; ++k) assembled += T.at(static_cast<std::size_t>(k)) *
                                            B.at(static_cast<std::size_t>(n - k));

  return (assembled - oracle).cwiseAbs().maxCoeff();
}

double base_psi_integral(const TowerSpec& spec, const OperatorSeq& U, int n) {
  const auto law = spec.base_law();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(spec.n_cells());
  const Eigen::VectorXd u1 = U.at(static_cast<std::size_t>(n)) * ones;
  double total = 0;
  for (std::size_t a = 0; a < spec.n_cells(); ++a) total += law[a] * u1(a);
  return total;
}

namespace {

// g_k(a) = E_a[Psi_k 1(T^k in base)] via time reversal of U_k.
Eigen::VectorXd forward_return_weights(const TowerSpec& spec, const OperatorSeq& U, int k) {
  const auto law = spec.base_law();
  const std::size_t dim = spec.n_cells();
  Eigen::VectorXd lawv(dim);
  for (std::size_t a = 0; a < dim; ++a) lawv(a) = law[a];
  Eigen::VectorXd g = U.at(static_cast<std::size_t>(k)).transpose() * lawv;
  for (std::size_t a = 0; a < dim; ++a) g(a) /= lawv(a);
  return g;
}

}  // namespace

double full_psi_integral(const TowerSpec& spec, const OperatorSeq& U, int n) {
  const std::size_t dim = spec.n_cells();
  const double z = spec.normalizer();
  std::vector<Eigen::VectorXd> g(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) g[static_cast<std::size_t>(k)] = forward_return_weights(spec, U, k);

  double total = 0;
  for (std::size_t a = 0; a < dim; ++a) total += spec.cells[a].mass * g[static_cast<std::size_t>(n)](a);
  for (int b = 1; b <= n; ++b) {
    const auto& gb = g[static_cast<std::size_t>(n - b)];
    for (std::size_t a = 0; a < dim; ++a) {
      if (spec.cells[a].return_time <= b) continue;
      double landed = 0;
      for (std::size_t ap = 0; ap < dim; ++ap) landed += spec.p0[a][ap] * gb(ap);
      total += spec.cells[a].mass * landed;
    }
  }
  return total / z;
}

McEstimate full_psi_integral_mc(const TowerSpec& spec, int n, std::size_t samples,
                                std::uint64_t seed, int threads) {
  std::vector<double> vals(samples);
  run_indexed_tasks(samples, threads, [&](std::size_t i) {
    RngStream rng = RngStream::substream(seed, i);
    TowerPoint p = sample_tower_point(spec, rng);
    std::uint64_t visits = 0;
    for (int k = 0; k < n; ++k) {
      if (p.level == 0) ++visits;
      p = tower_step(spec, p);
    }
    vals[i] = (p.level == 0) ? std::pow(spec.rho, static_cast<double>(visits)) : 0.0;
  });
  McEstimate est;
  est.samples = samples;
  est.value = mean(vals);
  est.std_error = std::sqrt(variance(vals) / static_cast<double>(samples));
  return est;
}

DecayDiagnostics decay_diagnostics(const TowerSpec& spec, int n_max) {
  const std::size_t dim = spec.n_cells();
  const Eigen::MatrixXd kernel = induced_kernel(spec);
  const auto law = spec.base_law();
  // T_n converges to the rank-one kernel mu(base) * ones * law^T: the row
  // sums T_n 1 tend to the return probability mu(base) = 1/E[phi], not to 1.
  const double mu_base = spec.base_mass() / spec.normalizer();
  Eigen::MatrixXd pi(dim, dim);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c) pi(r, c) = mu_base * law[c];

  DecayDiagnostics diag;
  diag.n_max = n_max;
  diag.moment_q = (spec.tail.kind == TailKind::Exponential) ? 2.0 : spec.tail.param;

  const std::size_t depth = static_cast<std::size_t>(spec.max_return_time()) + 1;
  std::vector<Eigen::MatrixXd> ring(depth, Eigen::MatrixXd::Zero(dim, dim));
  ring[0] = Eigen::MatrixXd::Identity(dim, dim);
  Eigen::MatrixXd prev = ring[0];

  diag.norm_t_minus_pi.push_back(sup_operator_norm(ring[0] - pi));
  for (int n = 1; n <= n_max; ++n) {
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(dim, dim);
    for (std::size_t a = 0; a < dim; ++a) {
      const std::size_t phi = static_cast<std::size_t>(spec.cells[a].return_time);
      if (phi > static_cast<std::size_t>(n)) continue;
      v.row(a) = ring[(static_cast<std::size_t>(n) - phi) % depth].row(a);
    }
    Eigen::MatrixXd tn = kernel * v;
    diag.norm_t_minus_pi.push_back(sup_operator_norm(tn - pi));
    diag.norm_t_diff.push_back(sup_operator_norm(tn - prev));
    prev = tn;
    ring[static_cast<std::size_t>(n) % depth] = std::move(tn);
  }

  // Fit the log decay over the numerically resolvable range.
  std::vector<double> xs, ys;
  for (int n = 1; n <= n_max; ++n) {
    const double norm = diag.norm_t_minus_pi[static_cast<std::size_t>(n)];
    if (norm > 1e-12) {
      xs.push_back(n);
      ys.push_back(std::log(norm));
    }
  }
  diag.log_norm_fit = linear_fit(xs, ys);

  diag.diff_moment_stability = moment_stability(diag.norm_t_diff, diag.moment_q - 1.0);
  diag.pi_moment_stability = moment_stability(diag.norm_t_minus_pi, diag.moment_q - 2.0);
  return diag;
}

namespace {

// e_k(a) = E_a[beta^{#\{j in [1,k]: T^j in base\}}] by first-return splitting.
std::vector<Eigen::VectorXd> phi_cell_recursion(const TowerSpec& spec, int m_max) {
  const std::size_t dim = spec.n_cells();
  std::vector<Eigen::VectorXd> e(static_cast<std::size_t>(m_max) + 1,
                                 Eigen::VectorXd::Ones(dim));
  for (int k = 1; k <= m_max; ++k) {
    auto& ek = e[static_cast<std::size_t>(k)];
    for (std::size_t a = 0; a < dim; ++a) {
      const int phi = spec.cells[a].return_time;
      if (phi > k) {
        ek(a) = 1.0;
        continue;
      }
      double acc = 0;
      const auto& prev = e[static_cast<std::size_t>(k - phi)];
      for (std::size_t ap = 0; ap < dim; ++ap) acc += spec.p0[a][ap] * prev(ap);
      ek(a) = spec.beta * acc;
    }
  }
  return e;
}

}  // namespace

double l_phi_operator(const TowerSpec& spec, const OperatorSeq& U, int n, int m) {
  if (n > m) throw std::invalid_argument("l_phi_operator needs n <= m");
  const auto e = phi_cell_recursion(spec, m - n);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(spec.n_cells());
  const Eigen::VectorXd u1 = U.at(static_cast<std::size_t>(n)) * ones;
  const double z = spec.normalizer();
  double total = 0;
  for (std::size_t a = 0; a < spec.n_cells(); ++a)
    total += spec.cells[a].mass * u1(a) * e[static_cast<std::size_t>(m - n)](a);
  return total / z;
}

McEstimate l_phi_mc(const TowerSpec& spec, int n, int m, std::size_t samples,
                    std::uint64_t seed, int threads) {
  // int_base L^n Phi_m = E_mu[1_base(y) beta^{visits in [1,m]} 1_base(T^n y)].
  std::vector<double> vals(samples);
  const double base_mass_frac = spec.base_mass() / spec.normalizer();
  const auto law = spec.base_law();
  run_indexed_tasks(samples, threads, [&](std::size_t i) {
    RngStream rng = RngStream::substream(seed, i);
    TowerPoint p;
    p.cell = static_cast<int>(sample_categorical(rng, law));
    p.level = 0;
    p.stream = RngStream(rng.next_u64());
    std::uint64_t visits = 0;
    bool base_at_n = (n == 0);
    for (int j = 1; j <= m; ++j) {
      p = tower_step(spec, p);
      if (p.level == 0) {
        ++visits;
        if (j == n) base_at_n = true;
      }
    }
    vals[i] = base_at_n ? std::pow(spec.beta, static_cast<double>(visits)) : 0.0;
  });
  McEstimate est;
  est.samples = samples;
  est.value = mean(vals) * base_mass_frac;
  est.std_error = std::sqrt(variance(vals) / static_cast<double>(samples)) * base_mass_frac;
  return est;
}

McEstimate phi_integral_mc(const TowerSpec& spec, int m, std::size_t samples,
                           std::uint64_t seed, int threads) {
  return l_phi_mc(spec, 0, m, samples, seed, threads);
}

PhiEstimates phi_operator_estimates(const TowerSpec& spec, int m_max, int b_max) {
  const std::size_t dim = spec.n_cells();
  const auto R = first_return_ops(spec, spec.max_return_time());
  const auto U = renewal_U(R, spec, spec.beta, m_max);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(dim);
  std::vector<Eigen::VectorXd> u1(static_cast<std::size_t>(m_max) + 1);
  for (int k = 0; k <= m_max; ++k) u1[static_cast<std::size_t>(k)] = U.at(static_cast<std::size_t>(k)) * ones;
  const double z = spec.normalizer();

  PhiEstimates out;

  // gamma(a, l) = (U_{m-l} 1)(a): integral of L^m Phi_m over the tower.
  out.integral_operator.resize(static_cast<std::size_t>(m_max) + 1);
  for (int m = 0; m <= m_max; ++m) {
    double total = 0;
    for (std::size_t a = 0; a < dim; ++a) {
      const int phi = spec.cells[a].return_time;
      const int lmax = std::min(phi - 1, m);
      for (int l = 0; l <= lmax; ++l) total += spec.cells[a].mass * u1[static_cast<std::size_t>(m - l)](a);
    }
    out.integral_operator[static_cast<std::size_t>(m)] = total / z;
  }

  const auto e = phi_cell_recursion(spec, m_max);
  out.integral_recursive.resize(static_cast<std::size_t>(m_max) + 1);
  for (int m = 0; m <= m_max; ++m) {
    double total = 0;
    for (std::size_t a = 0; a < dim; ++a)
      total += spec.cells[a].mass * e[static_cast<std::size_t>(m)](a);
    out.integral_recursive[static_cast<std::size_t>(m)] = total / z;
  }

  // e(b, m) = integral of L^m Phi_m over the entry-time-b slice.
  out.e_table.assign(static_cast<std::size_t>(b_max) + 1,
                     std::vector<double>(static_cast<std::size_t>(m_max) + 1, 0.0));
  for (int m = 0; m <= m_max; ++m) {
    double b0 = 0;
    for (std::size_t a = 0; a < dim; ++a) b0 += spec.cells[a].mass * u1[static_cast<std::size_t>(m)](a);
    out.e_table[0][static_cast<std::size_t>(m)] = b0 / z;
    for (int b = 1; b <= b_max; ++b) {
      double acc = 0;
      for (std::size_t a = 0; a < dim; ++a) {
        const int phi = spec.cells[a].return_time;
        const int l = phi - b;
        if (l >= 1 && l <= m) acc += spec.cells[a].mass * u1[static_cast<std::size_t>(m - l)](a);
      }
      out.e_table[static_cast<std::size_t>(b)][static_cast<std::size_t>(m)] = acc / z;
    }
  }

  // Consistency: sum_b e(b,m) recovers int Phi_m once b_max covers max phi.
  out.e_sum_residual = 0;
  out.e_min = 0;
  for (int m = 0; m <= m_max; ++m) {
    double s = 0;
    for (int b = 0; b <= b_max; ++b) {
      const double v = out.e_table[static_cast<std::size_t>(b)][static_cast<std::size_t>(m)];
      s += v;
      out.e_min = std::min(out.e_min, v);
    }
    out.e_sum_residual = std::max(out.e_sum_residual,
                                  std::abs(s - out.integral_operator[static_cast<std::size_t>(m)]));
  }

  // Ratio against the tail-convolution bound sum_i c_{b+i} c'_{m-i}, with
  // both factor sequences computed from the tower itself: c = the return-time
  // law (the Lambda_b slice masses) and c' = ||U_k|| (the renewal-operator
  // norms, a moment-q sequence by the visit-count lemma). The slice term at
  // i = 0 is the base itself, weight 1. With these explicit sequences the
  // domination is exact, so the reported ratios stay at or below 1.
  const auto law = spec.base_law();
  std::vector<double> pmf(static_cast<std::size_t>(spec.max_return_time()) + 1, 0.0);
  for (std::size_t a = 0; a < dim; ++a)
    pmf[static_cast<std::size_t>(spec.cells[a].return_time)] += law[a];
  auto slice = [&](int i) {
    return i < static_cast<int>(pmf.size()) ? pmf[static_cast<std::size_t>(i)] : 0.0;
  };
  std::vector<double> unorm(static_cast<std::size_t>(m_max) + 1);
  for (int k = 0; k <= m_max; ++k)
    unorm[static_cast<std::size_t>(k)] = sup_operator_norm(U.at(static_cast<std::size_t>(k)));
  const double mu_base = spec.base_mass() / z;
  out.e_bound_ratio.assign(static_cast<std::size_t>(b_max) + 1,
                           std::vector<double>(static_cast<std::size_t>(m_max) + 1, 0.0));
  for (int b = 0; b <= b_max; ++b)
    for (int m = 0; m <= m_max; ++m) {
      double bound = 0;
      if (b == 0) {
        bound = mu_base * unorm[static_cast<std::size_t>(m)];
      } else {
        for (int i = 1; i <= m; ++i)
          bound += mu_base * slice(b + i) * unorm[static_cast<std::size_t>(m - i)];
      }
      const double v = out.e_table[static_cast<std::size_t>(b)][static_cast<std::size_t>(m)];
      out.e_bound_ratio[static_cast<std::size_t>(b)][static_cast<std::size_t>(m)] =
          (bound > 0) ? v / bound : 0.0;
    }

  // Decay fit over the central window (truncation distorts the last octave).
  std::vector<double> xs, ys;
  for (int m = 2; m <= m_max / 2; ++m) {
    const double v = out.integral_operator[static_cast<std::size_t>(m)];
    if (v > 0) {
      xs.push_back(std::log(static_cast<double>(m)));
      ys.push_back(std::log(v));
    }
  }
  out.decay_fit = linear_fit(xs, ys);
  return out;
}

namespace {

struct Branch {
  double lo, hi;  // domain
  std::function<double(double)> fwd;
  std::function<double(double)> inv;  // defined on the image, clamped to domain
};

std::vector<Branch> map_branches(const IntervalMap& map) {
  if (std::holds_alternative<DoublingMap>(map)) {
    return {
        {0.0, 0.5, [](double x) { return 2 * x; }, [](double y) { return y / 2; }},
        {0.5, 1.0, [](double x) { return 2 * x - 1; }, [](double y) { return (y + 1) / 2; }},
    };
  }
  const auto im = std::get<IntermittentMap>(map);
  auto left = [im](double x) { return x * (1.0 + std::pow(2.0 * x, im.alpha)); };
  auto left_inv = [im, left](double y) {
    double lo = 0.0, hi = 0.5;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      (left(mid) < y ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  return {
      {0.0, 0.5, left, left_inv},
      {0.5, 1.0, [](double x) { return 2 * x - 1; }, [](double y) { return (y + 1) / 2; }},
  };
}

}  // namespace

UlamOperator ulam_build(const IntervalMap& map, int grid, double tol, std::size_t max_iter) {
  if (grid < 16) throw std::invalid_argument("ulam_build needs grid >= 16");
  UlamOperator op;
  op.grid = grid;
  const double width = 1.0 / grid;
  std::vector<Eigen::Triplet<double>> trips;
  for (const auto& br : map_branches(map)) {
    // Preimages of the grid boundaries under this branch, clamped to its domain.
    std::vector<double> pre(static_cast<std::size_t>(grid) + 1);
    for (int j = 0; j <= grid; ++j) {
      const double y = static_cast<double>(j) / grid;
      pre[static_cast<std::size_t>(j)] = std::clamp(br.inv(y), br.lo, br.hi);
    }
    for (int j = 0; j < grid; ++j) {
      const double a = pre[static_cast<std::size_t>(j)], b = pre[static_cast<std::size_t>(j) + 1];
      if (b <= a) continue;
      int i0 = std::clamp(static_cast<int>(a * grid), 0, grid - 1);
      int i1 = std::clamp(static_cast<int>(b * grid), 0, grid - 1);
      for (int i = i0; i <= i1; ++i) {
        const double cell_lo = i * width, cell_hi = (i + 1) * width;
        const double overlap = std::min(b, cell_hi) - std::max(a, cell_lo);
        if (overlap > 0) trips.emplace_back(i, j, overlap / width);
      }
    }
  }
  op.matrix.resize(grid, grid);
  op.matrix.setFromTriplets(trips.begin(), trips.end());

  // Power iteration on the mass vector v <- M^T v.
  Eigen::VectorXd v = Eigen::VectorXd::Constant(grid, 1.0 / grid);
  for (op.iterations = 0; op.iterations < max_iter; ++op.iterations) {
    Eigen::VectorXd next = op.matrix.transpose() * v;
    next /= next.sum();
    op.residual = (next - v).cwiseAbs().sum();
    v = next;
    if (op.residual < tol) {
      op.converged = true;
      break;
    }
  }
  op.density.resize(static_cast<std::size_t>(grid));
  for (int i = 0; i < grid; ++i) op.density[static_cast<std::size_t>(i)] = v(i) * grid;
  return op;
}

std::string operator_seq_to_csv(const OperatorSeq& seq) {
  std::string out;
  char buf[64];
  for (std::size_t n = 0; n < seq.mats.size(); ++n) {
    std::snprintf(buf, sizeof buf, "# role=%c index=%zu\n", seq.role, n);
    out += buf;
    const auto& m = seq.mats[n];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof buf, c + 1 == m.cols() ? "%.17g" : "%.17g,", m(r, c));
        out += buf;
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace towerlab
