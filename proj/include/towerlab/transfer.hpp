#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <string>
#include <vector>

#include "towerlab/dynamics.hpp"
#include "towerlab/stats.hpp"
#include "towerlab/tower.hpp"

namespace towerlab {

// Indexed family of backward (transfer) kernels over the base cells, or over
// the full (cell, level) basis for the boundary family. Operator norm is the
// sup norm on functions over the finite basis (max absolute row sum).
struct OperatorSeq {
  char role = 'R';  // one of R | T | B | U
  std::vector<Eigen::MatrixXd> mats;

  const Eigen::MatrixXd& at(std::size_t n) const { return mats.at(n); }
  std::size_t size() const { return mats.size(); }
};

double sup_operator_norm(const Eigen::MatrixXd& m);

// First-return transfer kernels: R_j is the induced-map transfer kernel
// restricted to columns with return time exactly j, so that sum_j R_j 1 = 1.
OperatorSeq first_return_ops(const TowerSpec& spec, int j_max);

// T_0 = I, T_n = sum_j R_j T_{n-j}: coefficients of (I - sum R_j z^j)^{-1}.
OperatorSeq renewal_T(const OperatorSeq& R, const TowerSpec& spec, int n_max);

// Boundary kernels over the full level basis: B_0 restricts to the base,
// B_b (b >= 1) carries the mass entering the base exactly at time b.
OperatorSeq boundary_ops(const TowerSpec& spec, int b_max);

// Max absolute entrywise residual of 1_base L^n = sum_{k+b=n} T_k B_b against
// the n-step transfer kernel computed by direct path products on the chain.
double check_decomposition(const TowerSpec& spec, int n);

// U_0 = I, U_n = rho sum_j R_j U_{n-j}.
OperatorSeq renewal_U(const OperatorSeq& R, const TowerSpec& spec, double rho, int n_max);

// int_{base ∩ T^-n base} Psi_n with respect to the base-normalized law.
double base_psi_integral(const TowerSpec& spec, const OperatorSeq& U, int n);

// int_{T^-n base} Psi_n with respect to the tower measure: the base slice plus
// the lambda_b-weighted shifts for entry times b = 1..n.
double full_psi_integral(const TowerSpec& spec, const OperatorSeq& U, int n);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

McEstimate full_psi_integral_mc(const TowerSpec& spec, int n, std::size_t samples,
                                std::uint64_t seed, int threads = 1);

struct DecayDiagnostics {
  int n_max = 0;
  std::vector<double> norm_t_minus_pi;   // index n
  std::vector<double> norm_t_diff;       // index n: ||T_{n+1} - T_n||
  LinearFit log_norm_fit;                // log ||T_n - Pi|| ~ n over the resolvable window
  StabilityReport diff_moment_stability; // sum n^{q-1} ||T_{n+1} - T_n||
  StabilityReport pi_moment_stability;   // sum n^{q-2} ||T_n - Pi||
  double moment_q = 2.0;
};

// Streams the T recursion (ring buffer of depth max phi), so n_max can exceed
// what renewal_T can afford to store.
DecayDiagnostics decay_diagnostics(const TowerSpec& spec, int n_max);

struct PhiEstimates {
  std::vector<double> integral_operator;   // int Phi_m via the U route, m = 0..m_max
  std::vector<double> integral_recursive;  // same integral via the cell recursion
  LinearFit decay_fit;                     // log int Phi_m ~ log m
  std::vector<std::vector<double>> e_table;       // e(b, m), b = 0..b_max
  std::vector<std::vector<double>> e_bound_ratio; // e(b,m) / tail-convolution bound
  double e_sum_residual = 0.0;  // max_m |sum_b e(b,m) - int Phi_m|
  double e_min = 0.0;
};

PhiEstimates phi_operator_estimates(const TowerSpec& spec, int m_max, int b_max);

// int_{base} L^n Phi_m via Phi_{m-n} (U_n 1), n <= m.
double l_phi_operator(const TowerSpec& spec, const OperatorSeq& U, int n, int m);
McEstimate l_phi_mc(const TowerSpec& spec, int n, int m, std::size_t samples,
                    std::uint64_t seed, int threads = 1);
McEstimate phi_integral_mc(const TowerSpec& spec, int m, std::size_t samples,
                           std::uint64_t seed, int threads = 1);

// Ulam discretization of the transfer operator for an interval map, with the
// invariant density estimated by power iteration on the mass vector.
struct UlamOperator {
  int grid = 0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix;  // row = source cell
  std::vector<double> density;                          // invariant density estimate
  std::size_t iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

UlamOperator ulam_build(const IntervalMap& map, int grid,
                        double tol = 1e-12, std::size_t max_iter = 100000);

// One matrix per block, header line with role and index.
std::string operator_seq_to_csv(const OperatorSeq& seq);

}  // namespace towerlab
