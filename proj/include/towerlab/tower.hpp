#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "towerlab/rng.hpp"

namespace towerlab {

enum class TailKind { Exponential, Polynomial, WeakPolynomial };

// Exponential(c0 > 0), Polynomial(q >= 2) with a strong q-th moment,
// WeakPolynomial(q > 2) with tails Theta(t^-q) (weak moment only; q = 2 is
// excluded because the weak-moment concentration statement fails there).
struct TailModel {
  TailKind kind = TailKind::Exponential;
  double param = 1.0;
  void validate() const;
};

struct TowerCell {
  double mass = 0.0;       // base mass m_alpha
  int return_time = 1;     // phi(alpha) >= 1
};

// Synthetic Young tower simulated at (cell, level) granularity. The base
// transition after a completed column is a Markov step with row-stochastic
// matrix p0 whose stationary law is the normalized base masses.
struct TowerSpec {
  std::vector<TowerCell> cells;
  std::vector<std::vector<double>> p0;
  double beta = 0.5;
  double rho = 0.5;
  TailModel tail;

  std::size_t n_cells() const { return cells.size(); }
  int max_return_time() const;
  double base_mass() const;         // sum m_alpha
  double normalizer() const;        // Z = sum m_alpha phi(alpha)
  std::size_t level_count() const;  // total number of (cell, level) pairs
  std::vector<double> base_law() const;      // m_alpha / sum m
  std::vector<double> level_masses() const;  // mu(cell, level) = m_alpha / Z, flattened
  // Mass of the set entering the base exactly at time b (levels phi - b >= 1).
  double lambda_mass(int b) const;

  void validate() const;
};

// phi(alpha) = alpha + 1 with masses prescribed by the tail model. seed == 0
// gives the rank-one base transition; otherwise p0 is mixed with a Metropolis
// chain targeting the same stationary law, preserving irreducibility.
TowerSpec build_tower(const TailModel& tail, int n_cells, std::uint64_t seed);

struct TowerPoint {
  int cell = 0;
  int level = 0;
  RngStream stream;  // resolves base transitions; caller-owned determinism
};

TowerPoint tower_step(const TowerSpec& spec, TowerPoint p);

// Draw a point from the invariant measure (column ~ mass * height, level uniform).
TowerPoint sample_tower_point(const TowerSpec& spec, RngStream& rng);

struct CellLevel {
  int cell = 0;
  int level = 0;
  bool operator==(const CellLevel&) const = default;
};

// The (cell, level) itinerary of a point, length n.
std::vector<CellLevel> tower_trajectory(const TowerSpec& spec, TowerPoint p, std::size_t n);

enum class SeparationMode { Uniform, NonUniform };

struct SeparationResult {
  std::size_t time = 0;
  bool censored = false;
};

// Uniform mode counts raw steps until the partition elements differ;
// non-uniform mode counts base visits until the visited base cells differ.
SeparationResult separation_time(std::span<const CellLevel> a, std::span<const CellLevel> b,
                                 SeparationMode mode);

struct PsiCount {
  std::uint64_t visits = 0;  // psi_n = #{0 <= k <= n-1 : height = 0}
  double value = 1.0;        // Psi_n = rho^psi_n
};

PsiCount psi_count(const TowerSpec& spec, TowerPoint p, std::uint64_t n);

// Phi_n = beta^{#{j in [1,n] : T^j p in base}} on base points, 0 elsewhere.
double phi_fn(const TowerSpec& spec, TowerPoint p, std::uint64_t n);

std::string tower_to_json(const TowerSpec& spec);
TowerSpec tower_from_json(const std::string& text);

}  // namespace towerlab
