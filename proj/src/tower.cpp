#include "towerlab/tower.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace towerlab {

namespace {
// Strong-moment construction: masses phi^-(q+1+eps). eps must be large enough
// that the q-th moment partial sums actually stabilize at desk-scale horizons
// (eps = 0.1 would need ~10^20 cells to meet the 1% window criterion).
constexpr double kStrongMomentEpsilon = 0.75;
}  // namespace

void TailModel::validate() const {
  switch (kind) {
    case TailKind::Exponential:
      if (!(param > 0.0)) throw std::invalid_argument("Exponential tail needs c0 > 0");
      break;
    case TailKind::Polynomial:
      if (!(param >= 2.0)) throw std::invalid_argument("Polynomial tail needs q >= 2");
      break;
    case TailKind::WeakPolynomial:
      if (!(param > 2.0)) throw std::invalid_argument("WeakPolynomial tail needs q > 2");
      break;
  }
}

int TowerSpec::max_return_time() const {
  int m = 0;
  for (const auto& c : cells) m = std::max(m, c.return_time);
  return m;
}

double TowerSpec::base_mass() const {
  double s = 0;
  for (const auto& c : cells) s += c.mass;
  return s;
}

double TowerSpec::normalizer() const {
  double z = 0;
  for (const auto& c : cells) z += c.mass * c.return_time;
  return z;
}

std::size_t TowerSpec::level_count() const {
  std::size_t n = 0;
  for (const auto& c : cells) n += static_cast<std::size_t>(c.return_time);
  return n;
}

std::vector<double> TowerSpec::base_law() const {
  std::vector<double> law(cells.size());
  const double total = base_mass();
  for (std::size_t i = 0; i < cells.size(); ++i) law[i] = cells[i].mass / total;
  return law;
}

std::vector<double> TowerSpec::level_masses() const {
  const double z = normalizer();
  std::vector<double> out;
  out.reserve(level_count());
  for (const auto& c : cells)
    for (int l = 0; l < c.return_time; ++l) out.push_back(c.mass / z);
  return out;
}

double TowerSpec::lambda_mass(int b) const {
  if (b == 0) return base_mass() / normalizer();
  double s = 0;
  for (const auto& c : cells)
    if (c.return_time > b) s += c.mass;
  return s / normalizer();
}

void TowerSpec::validate() const {
  tail.validate();
  if (cells.empty()) throw std::invalid_argument("tower needs at least one cell");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must be in (0,1)");
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must be in (0,1)");
  int g = 0;
  for (const auto& c : cells) {
    if (!(c.mass > 0.0)) throw std::invalid_argument("cell masses must be positive");
    if (c.return_time < 1) throw std::invalid_argument("return times must be >= 1");
    g = std::gcd(g, c.return_time);
  }
  if (g != 1) throw std::invalid_argument("tower must be aperiodic (gcd of return times 1)");
  if (!std::isfinite(normalizer())) throw std::invalid_argument("sum m_alpha phi(alpha) must be finite");

  // Kahan-compensated walk over the flattened levels: the tower can hold
  // tens of millions of levels and naive accumulation drifts past 1e-12.
  const double z = normalizer();
  double total = 0.0, comp = 0.0;
  for (const auto& c : cells) {
    const double m = c.mass / z;
    for (int l = 0; l < c.return_time; ++l) {
      const double y = m - comp;
      const double t = total + y;
      comp = (t - total) - y;
      total = t;
    }
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("level masses must sum to 1");

  if (p0.size() != cells.size()) throw std::invalid_argument("p0 must have one row per cell");
  const auto law = base_law();
  std::vector<double> image(cells.size(), 0.0);
  for (std::size_t a = 0; a < cells.size(); ++a) {
    if (p0[a].size() != cells.size()) throw std::invalid_argument("p0 rows must be square");
    double row = 0;
    for (std::size_t b = 0; b < cells.size(); ++b) {
      if (p0[a][b] < 0.0) throw std::invalid_argument("p0 entries must be nonnegative");
      row += p0[a][b];
      image[b] += law[a] * p0[a][b];
    }
    if (std::abs(row - 1.0) > 1e-12) throw std::invalid_argument("p0 rows must sum to 1");
  }
  for (std::size_t b = 0; b < cells.size(); ++b)
    if (std::abs(image[b] - law[b]) > 1e-10)
      throw std::invalid_argument("base law is not stationary for p0");

  // Irreducibility of the base chain: strong connectivity over positive entries.
  auto reach = [&](bool forward) {
    std::vector<char> seen(cells.size(), 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const std::size_t a = stack.back();
      stack.pop_back();
      for (std::size_t b = 0; b < cells.size(); ++b) {
        const double w = forward ? p0[a][b] : p0[b][a];
        if (!seen[b] && w > 0.0) {
          seen[b] = 1;
          stack.push_back(b);
        }
      }
    }
    return std::find(seen.begin(), seen.end(), 0) == seen.end();
  };
  if (!reach(true) || !reach(false))
    throw std::invalid_argument("base chain is not irreducible");
}

TowerSpec build_tower(const TailModel& tail, int n_cells, std::uint64_t seed) {
  tail.validate();
  if (n_cells < 1) throw std::invalid_argument("build_tower needs at least one cell");

  TowerSpec spec;
  spec.tail = tail;
  spec.cells.resize(n_cells);
  double total = 0;
  for (int i = 0; i < n_cells; ++i) {
    const double phi = i + 1;
    double m = 0;
    switch (tail.kind) {
      case TailKind::Exponential:
        m = std::exp(-2.0 * tail.param * phi);
        break;
      case TailKind::Polynomial:
        m = std::pow(phi, -(tail.param + 1.0 + kStrongMomentEpsilon));
        break;
      case TailKind::WeakPolynomial:
        m = std::pow(phi, -(tail.param + 1.0));
        break;
    }
    spec.cells[i].mass = m;
    spec.cells[i].return_time = i + 1;
    total += m;
  }
  for (auto& c : spec.cells) c.mass /= total;

  const auto law = spec.base_law();
  const std::size_t n = spec.cells.size();
  spec.p0.assign(n, law);  // rank-one default: every row is the base law

  if (seed != 0 && n > 1) {
    // Mix with a Metropolis chain targeting the same law; stationarity and
    // irreducibility survive any mixture weight in (0,1).
    RngStream rng(seed);
    const double w = 0.1 + 0.3 * rng.next_double();
    for (std::size_t a = 0; a < n; ++a) {
      double diag = 1.0;
      for (std::size_t b = 0; b < n; ++b) {
        if (b == a) continue;
        const double move = std::min(1.0, law[b] / law[a]) / static_cast<double>(n);
        spec.p0[a][b] = (1.0 - w) * law[b] + w * move;
        diag -= move;
      }
      spec.p0[a][a] = (1.0 - w) * law[a] + w * diag;
    }
  }

  spec.validate();
  return spec;
}

TowerPoint tower_step(const TowerSpec& spec, TowerPoint p) {
  const int phi = spec.cells[p.cell].return_time;
  if (p.level + 1 < phi) {
    ++p.level;
    return p;
  }
  p.cell = static_cast<int>(sample_categorical(p.stream, spec.p0[p.cell]));
  p.level = 0;
  return p;
}

TowerPoint sample_tower_point(const TowerSpec& spec, RngStream& rng) {
  const double z = spec.normalizer();
  double u = rng.next_double() * z;
  TowerPoint p;
  for (std::size_t i = 0; i < spec.cells.size(); ++i) {
    const double column = spec.cells[i].mass * spec.cells[i].return_time;
    if (u < column || i + 1 == spec.cells.size()) {
      p.cell = static_cast<int>(i);
      p.level = static_cast<int>(rng.next_below(spec.cells[i].return_time));
      break;
    }
    u -= column;
  }
  p.stream = RngStream(rng.next_u64());
  return p;
}

std::vector<CellLevel> tower_trajectory(const TowerSpec& spec, TowerPoint p, std::size_t n) {
  std::vector<CellLevel> traj;
  traj.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    traj.push_back({p.cell, p.level});
    if (k + 1 < n) p = tower_step(spec, p);
  }
  return traj;
}

SeparationResult separation_time(std::span<const CellLevel> a, std::span<const CellLevel> b,
                                 SeparationMode mode) {
  if (a.size() != b.size()) throw std::invalid_argument("separation_time: unequal lengths");
  if (!a.empty() && (a[0].level != 0 || b[0].level != 0))
    throw std::invalid_argument("separation_time: trajectories must start at height 0");

  if (mode == SeparationMode::Uniform) {
    for (std::size_t k = 0; k < a.size(); ++k)
      if (!(a[k] == b[k])) return {k, false};
    return {a.size(), true};
  }

  // Non-uniform: compare the sequences of visited base cells.
  std::size_t visits = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const bool base_a = a[k].level == 0, base_b = b[k].level == 0;
    if (base_a != base_b) return {visits, false};
    if (base_a) {
      if (a[k].cell != b[k].cell) return {visits, false};
      ++visits;
    }
  }
  return {a.size(), true};
}

PsiCount psi_count(const TowerSpec& spec, TowerPoint p, std::uint64_t n) {
  PsiCount out;
  for (std::uint64_t k = 0; k < n; ++k) {
    if (p.level == 0) ++out.visits;
    p = tower_step(spec, p);
  }
  out.value = std::pow(spec.rho, static_cast<double>(out.visits));
  return out;
}

double phi_fn(const TowerSpec& spec, TowerPoint p, std::uint64_t n) {
  if (p.level != 0) return 0.0;
  std::uint64_t visits = 0;
  for (std::uint64_t j = 1; j <= n; ++j) {
    p = tower_step(spec, p);
    if (p.level == 0) ++visits;
  }
  return std::pow(spec.beta, static_cast<double>(visits));
}

std::string tower_to_json(const TowerSpec& spec) {
  nlohmann::json j;
  j["beta"] = spec.beta;
  j["rho"] = spec.rho;
  switch (spec.tail.kind) {
    case TailKind::Exponential: j["tail"]["kind"] = "exponential"; break;
    case TailKind::Polynomial: j["tail"]["kind"] = "polynomial"; break;
    case TailKind::WeakPolynomial: j["tail"]["kind"] = "weak_polynomial"; break;
  }
  j["tail"]["param"] = spec.tail.param;
  auto& cells = j["cells"] = nlohmann::json::array();
  for (const auto& c : spec.cells) cells.push_back({{"mass", c.mass}, {"phi", c.return_time}});
  j["p0"] = spec.p0;
  return j.dump(2);
}

TowerSpec tower_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  TowerSpec spec;
  spec.beta = j.at("beta").get<double>();
  spec.rho = j.at("rho").get<double>();
  const std::string kind = j.at("tail").at("kind").get<std::string>();
  if (kind == "exponential") spec.tail.kind = TailKind::Exponential;
  else if (kind == "polynomial") spec.tail.kind = TailKind::Polynomial;
  else if (kind == "weak_polynomial") spec.tail.kind = TailKind::WeakPolynomial;
  else throw std::invalid_argument("unknown tail kind: " + kind);
  spec.tail.param = j.at("tail").at("param").get<double>();
  for (const auto& c : j.at("cells"))
    spec.cells.push_back({c.at("mass").get<double>(), c.at("phi").get<int>()});
  spec.p0 = j.at("p0").get<std::vector<std::vector<double>>>();
  spec.validate();
  return spec;
}

}  // namespace towerlab
