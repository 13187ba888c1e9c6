#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "towerlab/concentration.hpp"
#include "towerlab/dynamics.hpp"
#include "towerlab/martingale.hpp"
#include "towerlab/observables.hpp"
#include "towerlab/seqcalc.hpp"
#include "towerlab/stats.hpp"
#include "towerlab/tower.hpp"
#include "towerlab/transfer.hpp"

namespace towerlab::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct ConfigError : std::runtime_error {
  std::string code;
  ConfigError(std::string c, const std::string& msg)
      : std::runtime_error(msg), code(std::move(c)) {}
};

struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string subcommand;
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::string out_dir;
  bool has_seed = false;
  std::uint64_t seed = 0;
  int threads = 1;
};

[[noreturn]] void usage_error(const std::string& msg) {
  throw ConfigError("CONFIG_USAGE", msg);
}

Options parse_args(int argc, char** argv) {
  Options opt;
  if (argc < 2) usage_error("expected a subcommand");
  opt.subcommand = argv[1];
  for (int i = 2; i < argc; ++i) {
    const std::string arg = argv[i];
    auto need_value = [&](const char* flag) -> std::string {
      if (i + 1 >= argc) usage_error(std::string(flag) + " needs a value");
      return argv[++i];
    };
    if (arg == "--config") opt.config_path = need_value("--config");
    else if (arg == "--out") opt.out_dir = need_value("--out");
    else if (arg == "--seed") {
      opt.has_seed = true;
      opt.seed = std::stoull(need_value("--seed"));
    } else if (arg == "--threads") opt.threads = std::stoi(need_value("--threads"));
    else if (arg == "--set") {
      const std::string kv = need_value("--set");
      const auto eq = kv.find('=');
      if (eq == std::string::npos) usage_error("--set expects key=value");
      opt.overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    } else usage_error("unknown flag " + arg);
  }
  return opt;
}

json load_config(const Options& opt) {
  json cfg = json::object();
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) throw ConfigError("CONFIG_NOT_FOUND", "cannot open " + opt.config_path);
    try {
      in >> cfg;
    } catch (const std::exception& e) {
      throw ConfigError("CONFIG_PARSE", e.what());
    }
  }
  for (const auto& [path, value] : opt.overrides) {
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (...) {
      parsed = value;  // plain string
    }
    json* node = &cfg;
    std::string rest = path;
    while (true) {
      const auto dot = rest.find('.');
      const std::string key = rest.substr(0, dot);
      if (dot == std::string::npos) {
        (*node)[key] = parsed;
        break;
      }
      node = &((*node)[key]);
      rest = rest.substr(dot + 1);
    }
  }
  return cfg;
}

void collect_paths(const json& node, const std::string& prefix, std::vector<std::string>& out) {
  if (node.is_object()) {
    for (const auto& [key, value] : node.items()) {
      const std::string path = prefix.empty() ? key : prefix + "." + key;
      out.push_back(path);
      collect_paths(value, path, out);
    }
  } else if (node.is_array()) {
    for (const auto& value : node) collect_paths(value, prefix + "[]", out);
  }
}

void enforce_schema(const json& cfg, const std::set<std::string>& allowed) {
  std::vector<std::string> paths;
  collect_paths(cfg, "", paths);
  for (const auto& p : paths)
    if (!allowed.contains(p)) throw ConfigError("CONFIG_UNKNOWN_KEY", p);
}

void echo_set(json& echo, const std::string& dotted, const json& value) {
  json* node = &echo;
  std::string rest = dotted;
  while (true) {
    const auto dot = rest.find('.');
    const std::string key = rest.substr(0, dot);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &((*node)[key]);
    rest = rest.substr(dot + 1);
  }
}

// Fetch a config value with a default, recording the effective value in the
// echoed config (which the report embeds).
template <typename T>
T take(const json& cfg, const std::string& dotted, const T& fallback, json& echo) {
  const json* node = &cfg;
  std::string rest = dotted;
  while (true) {
    const auto dot = rest.find('.');
    const std::string key = rest.substr(0, dot);
    if (!node->is_object() || !node->contains(key)) {
      echo_set(echo, dotted, json(fallback));
      return fallback;
    }
    if (dot == std::string::npos) {
      try {
        T v = node->at(key).get<T>();
        echo_set(echo, dotted, json(v));
        return v;
      } catch (const std::exception&) {
        throw ConfigError("CONFIG_BAD_VALUE", dotted);
      }
    }
    node = &node->at(key);
    rest = rest.substr(dot + 1);
  }
}

std::uint64_t require_seed(const json& cfg, const Options& opt, json& echo) {
  if (opt.has_seed) {
    echo_set(echo, "experiment.master_seed", opt.seed);
    return opt.seed;
  }
  if (!cfg.contains("experiment") || !cfg.at("experiment").contains("master_seed"))
    throw ConfigError("CONFIG_MISSING_KEY", "experiment.master_seed");
  return take<std::uint64_t>(cfg, "experiment.master_seed", 0, echo);
}

fs::path resolve_out_dir(const Options& opt, const json& cfg) {
  if (!opt.out_dir.empty()) return opt.out_dir;
  if (cfg.contains("output") && cfg.at("output").contains("dir"))
    return cfg.at("output").at("dir").get<std::string>();
  if (const char* env = std::getenv("TOWERLAB_OUT")) return env;
  return "towerlab-out";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// Two-column gnuplot-ready data with a comment header.
void write_plot(const fs::path& path, const std::string& xlabel, const std::string& ylabel,
                std::uint64_t seed, std::span<const double> x, std::span<const double> y) {
  if (x.empty() || x.size() != y.size())
    throw ConfigError("MISSING_SERIES", path.filename().string());
  std::string text = "# " + xlabel + " " + ylabel + " seed=" + std::to_string(seed) + "\n";
  char buf[80];
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g\n", x[i], y[i]);
    text += buf;
  }
  write_text(path, text);
}

void write_csv(const fs::path& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
  std::string text = header + "\n";
  char buf[64];
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof buf, i + 1 == row.size() ? "%.17g" : "%.17g,", row[i]);
      text += buf;
    }
    text += '\n';
  }
  write_text(path, text);
}

IntervalMap parse_interval_system(const json& cfg, json& echo) {
  const std::string kind = take<std::string>(cfg, "system.kind", "doubling", echo);
  if (kind == "doubling") return DoublingMap{};
  if (kind == "intermittent") {
    const double alpha = take<double>(cfg, "system.alpha", 0.5, echo);
    try {
      return IntermittentMap(alpha);
    } catch (const std::exception& e) {
      throw ConfigError("CONFIG_BAD_VALUE", e.what());
    }
  }
  throw ConfigError("CONFIG_BAD_VALUE", "system.kind = " + kind);
}

TowerSpec parse_tower(const json& cfg, json& echo) {
  const std::string kind = take<std::string>(cfg, "system.tail.kind", "polynomial", echo);
  TailModel tail;
  if (kind == "exponential") tail.kind = TailKind::Exponential;
  else if (kind == "polynomial") tail.kind = TailKind::Polynomial;
  else if (kind == "weak_polynomial") tail.kind = TailKind::WeakPolynomial;
  else throw ConfigError("CONFIG_BAD_VALUE", "system.tail.kind = " + kind);
  tail.param = take<double>(cfg, "system.tail.param",
                            tail.kind == TailKind::Exponential ? 1.0 : 2.0, echo);
  const int cells = take<int>(cfg, "system.cells", 48, echo);
  const auto tower_seed = take<std::uint64_t>(cfg, "system.tower_seed", 0, echo);
  try {
    TowerSpec spec = build_tower(tail, cells, tower_seed);
    spec.beta = take<double>(cfg, "system.beta", spec.beta, echo);
    spec.rho = take<double>(cfg, "system.rho", spec.rho, echo);
    spec.validate();
    return spec;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("CONFIG_BAD_VALUE", e.what());
  }
}

struct NamedFunction {
  std::function<double(double)> f;
  double lip = 1.0;
  double sup = 1.0;
};

NamedFunction observable_function(const std::string& name) {
  if (name == "cos2pi")
    return {[](double x) { return std::cos(2 * M_PI * x); }, 2 * M_PI, 1.0};
  if (name == "sin2pi")
    return {[](double x) { return std::sin(2 * M_PI * x); }, 2 * M_PI, 1.0};
  if (name == "identity") return {[](double x) { return x; }, 1.0, 1.0};
  throw ConfigError("CONFIG_BAD_VALUE", "observable.f = " + name);
}

json fit_to_json(const LinearFit& fit) {
  return {{"slope", fit.slope}, {"intercept", fit.intercept}, {"r2", fit.r2},
          {"points", fit.points}};
}

json stability_to_json(const StabilityReport& st) {
  return {{"sum", st.sum}, {"rel_increment", st.rel_increment}, {"stable", st.stable}};
}

// ---------------------------------------------------------------------------
// Subcommands. Each returns the result json; artifacts land under `out`.

json cmd_orbit(const json& cfg, const Options& opt, const fs::path& out, json& echo) {
  const std::uint64_t seed = require_seed(cfg, opt, echo);
  enforce_schema(cfg, {"system", "system.kind", "system.alpha", "experiment",
                       "experiment.kind", "experiment.master_seed", "experiment.n",
                       "experiment.x0", "experiment.threads", "output", "output.dir",
                       "output.plots", "output.tables"});
  const auto map = parse_interval_system(cfg, echo);
  const auto n = take<std::size_t>(cfg, "experiment.n", 64, echo);
  const double x0 = take<double>(cfg, "experiment.x0", -1.0, echo);

  std::vector<double> orbit;
  if (x0 >= 0.0) {
    orbit = generate_orbit(map, x0, n);
  } else {
    RngStream rng(seed);
    orbit = sample_stationary_orbit(map, rng, n, 10'000);
  }
  std::vector<std::vector<double>> rows;
  std::vector<double> ks(orbit.size());
  for (std::size_t k = 0; k < orbit.size(); ++k) {
    ks[k] = static_cast<double>(k);
    rows.push_back({ks[k], orbit[k]});
  }
  write_csv(out / "tables" / "orbit.csv", "k,x", rows);
  write_plot(out / "plots" / "orbit.dat", "k", "x", seed, ks, orbit);

  json rep;
  rep["n"] = orbit.size();
  rep["first"] = std::vector<double>(orbit.begin(),
                                     orbit.begin() + std::min<std::size_t>(8, orbit.size()));
  rep["mean"] = mean(orbit);
  return rep;
}

json cmd_tower_build(const json& cfg, const Options& opt, const fs::path& out, json& echo) {
  require_seed(cfg, opt, echo);
  enforce_schema(cfg, {"system", "system.tail", "system.tail.kind", "system.tail.param",
                       "system.cells", "system.tower_seed", "system.beta", "system.rho",
                       "experiment", "experiment.kind", "experiment.master_seed",
                       "experiment.threads", "output", "output.dir", "output.plots",
                       "output.tables"});
  const auto spec = parse_tower(cfg, echo);
  write_text(out / "tower.json", tower_to_json(spec));

  const double z = spec.normalizer();
  double total = 0, comp = 0;
  for (const auto& cell : spec.cells)
    for (int l = 0; l < cell.return_time; ++l) {
      const double y = cell.mass / z - comp;
      const double t = total + y;
      comp = (t - total) - y;
      total = t;
    }
  json rep;
  rep["cells"] = spec.n_cells();
  rep["levels"] = spec.level_count();
  rep["level_mass_total"] = total;
  rep["normalizer"] = spec.normalizer();
  rep["base_mass"] = spec.base_mass();
  rep["round_trip_exact"] =
      tower_to_json(tower_from_json(tower_to_json(spec))) == tower_to_json(spec);
  if (std::abs(total - 1.0) > 1e-12) throw InvariantError("level masses do not sum to 1");
  return rep;
}

json cmd_operator_diagnostics(const json& cfg, const Options& opt, const fs::path& out,
                              json& echo) {
  const std::uint64_t seed = require_seed(cfg, opt, echo);
  enforce_schema(cfg, {"system", "system.tail", "system.tail.kind", "system.tail.param",
                       "system.cells", "system.tower_seed", "system.beta", "system.rho",
                       "experiment", "experiment.kind", "experiment.master_seed",
                       "experiment.n_max", "experiment.decomposition_n",
                       "experiment.psi_probes", "experiment.psi_probes[]",
                       "experiment.psi_mc_samples", "experiment.threads", "output",
                       "output.dir", "output.plots", "output.tables"});
  const auto spec = parse_tower(cfg, echo);
  const int n_max = take<int>(cfg, "experiment.n_max", 1 << 12, echo);
  const int dec_n = take<int>(cfg, "experiment.decomposition_n", 20, echo);
  const auto probes = take<std::vector<int>>(cfg, "experiment.psi_probes",
                                             std::vector<int>{4, 8, 12, 16, 24}, echo);
  const auto mc_samples = take<std::size_t>(cfg, "experiment.psi_mc_samples", 100'000, echo);
  const int threads = opt.threads;

  const double residual = check_decomposition(spec, dec_n);
  const auto diag = decay_diagnostics(spec, n_max);

  std::vector<double> ns(diag.norm_t_minus_pi.size());
  for (std::size_t i = 0; i < ns.size(); ++i) ns[i] = static_cast<double>(i);
  write_plot(out / "plots" / "t_minus_pi.dat", "n", "norm", seed, ns, diag.norm_t_minus_pi);
  std::vector<double> nd(diag.norm_t_diff.size());
  for (std::size_t i = 0; i < nd.size(); ++i) nd[i] = static_cast<double>(i);
  write_plot(out / "plots" / "t_diff.dat", "n", "norm", seed, nd, diag.norm_t_diff);

  const auto r = first_return_ops(spec, spec.max_return_time());
  const int probe_max = probes.empty() ? 0 : *std::max_element(probes.begin(), probes.end());
  const auto u = renewal_U(r, spec, spec.rho, probe_max);
  std::vector<std::vector<double>> psi_rows;
  json psi = json::array();
  bool mc_ok = true;
  for (int n : probes) {
    const double op = full_psi_integral(spec, u, n);
    const auto mc = full_psi_integral_mc(spec, n, mc_samples, seed ^ 0x9157ULL, threads);
    psi_rows.push_back({static_cast<double>(n), op, mc.value, mc.std_error});
    psi.push_back({{"n", n}, {"operator", op}, {"mc", mc.value}, {"mc_stderr", mc.std_error}});
    if (std::abs(mc.value - op) > 3.0 * mc.std_error + 1e-12) mc_ok = false;
  }
  write_csv(out / "tables" / "psi_integral.csv", "n,operator,mc,mc_stderr", psi_rows);
  write_text(out / "tables" / "operators.csv", operator_seq_to_csv(r));

  json rep;
  rep["decomposition_residual"] = residual;
  rep["log_norm_fit"] = fit_to_json(diag.log_norm_fit);
  rep["diff_moment_stability"] = stability_to_json(diag.diff_moment_stability);
  rep["pi_moment_stability"] = stability_to_json(diag.pi_moment_stability);
  rep["psi"] = psi;
  rep["psi_mc_within_3sigma"] = mc_ok;
  if (residual > 1e-8) throw InvariantError("renewal decomposition residual above 1e-8");
  return rep;
}

json cmd_martingale_verify(const json& cfg, const Options& opt, const fs::path& out,
                           json& echo) {
  const std::uint64_t seed = require_seed(cfg, opt, echo);
  enforce_schema(cfg, {"experiment", "experiment.kind", "experiment.master_seed",
                       "experiment.arity", "experiment.batch", "experiment.threads",
                       "output", "output.dir", "output.plots", "output.tables"});
  const auto arity = take<std::size_t>(cfg, "experiment.arity", 8, echo);
  const auto batch_size = take<std::size_t>(cfg, "experiment.batch", 100, echo);
  if (arity > 10) throw ConfigError("CONFIG_BAD_VALUE", "experiment.arity must be <= 10");

  ExactShiftContext ctx;
  ctx.shift = ShiftSystem::bernoulli({0.5, 0.5});
  RngStream rng(seed);
  double worst_mart = 0, worst_tel = 0;
  std::vector<WordObservable> batch;
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < batch_size; ++i) {
    batch.push_back(random_word_observable(ctx.shift, arity, rng));
    const auto& obs = batch.back();
    std::vector<std::uint8_t> word(obs.span());
    for (auto& s : word) s = static_cast<std::uint8_t>(rng.next_below(2));
    double mart = 0;
    for (std::size_t p = 0; p + 1 < obs.span(); ++p)
      mart = std::max(mart,
                      std::abs(martingale_residual(
                          ctx, obs, p, std::span<const std::uint8_t>(word).subspan(p + 1))));
    const double tel = std::abs(telescoping_residual(ctx, obs, word));
    worst_mart = std::max(worst_mart, mart);
    worst_tel = std::max(worst_tel, tel);
    rows.push_back({static_cast<double>(i), mart, tel});
  }
  const auto hoeffding = check_hoeffding_azuma(ctx, batch);
  write_csv(out / "tables" / "residuals.csv", "observable,martingale_residual,telescoping",
            rows);

  json rep;
  rep["worst_martingale_residual"] = worst_mart;
  rep["worst_telescoping_residual"] = worst_tel;
  rep["hoeffding_worst_ratio"] = hoeffding.worst_ratio;
  rep["batch"] = batch_size;
  if (worst_mart > 1e-12 || worst_tel > 1e-12 || !hoeffding.passed)
    throw InvariantError("martingale residuals exceed 1e-12 or Hoeffding ratio above 1");
  return rep;
}

json cmd_deviation(const json& cfg, const Options& opt, const fs::path& out, json& echo) {
  const std::uint64_t seed = require_seed(cfg, opt, echo);
  enforce_schema(cfg, {"system", "system.kind", "system.alpha", "observable",
                       "observable.f", "observable.n", "observable.kind", "observable.lag",
                       "experiment", "experiment.kind", "experiment.master_seed",
                       "experiment.trials", "experiment.t_grid", "experiment.t_grid[]",
                       "experiment.burn_in", "experiment.centering",
                       "experiment.reference_value", "experiment.bound",
                       "experiment.bound.kind", "experiment.bound.c", "experiment.bound.q",
                       "experiment.weak_q", "experiment.threads", "output", "output.dir",
                       "output.plots", "output.tables"});
  DeviationExperiment exp;
  exp.map = parse_interval_system(cfg, echo);
  const auto fname = take<std::string>(cfg, "observable.f", "cos2pi", echo);
  const auto fn = observable_function(fname);
  const auto n = take<std::size_t>(cfg, "observable.n", 1 << 10, echo);
  const auto okind = take<std::string>(cfg, "observable.kind", "birkhoff", echo);
  if (okind == "birkhoff") {
    exp.obs = birkhoff(fn.f, fn.lip, n, fname);
  } else if (okind == "empirical_covariance") {
    const auto lag = take<std::size_t>(cfg, "observable.lag", 1, echo);
    exp.obs = empirical_covariance_obs(fn.f, fn.lip, fn.sup, n, lag, fname);
  } else {
    throw ConfigError("CONFIG_BAD_VALUE", "observable.kind = " + okind);
  }
  exp.trials = take<std::size_t>(cfg, "experiment.trials", 10'000, echo);
  exp.t_grid = take<std::vector<double>>(cfg, "experiment.t_grid", {}, echo);
  exp.master_seed = seed;
  exp.burn_in = take<std::size_t>(cfg, "experiment.burn_in", 10'000, echo);
  const auto centering = take<std::string>(cfg, "experiment.centering", "empirical", echo);
  if (centering == "empirical") exp.centering = Centering::EmpiricalMean;
  else if (centering == "reference") {
    exp.centering = Centering::Reference;
    exp.reference_value = take<double>(cfg, "experiment.reference_value", 0.0, echo);
  } else throw ConfigError("CONFIG_BAD_VALUE", "experiment.centering = " + centering);
  exp.threads = opt.threads;

  const auto rep = run_deviation(exp);

  const auto bound_kind =
      take<std::string>(cfg, "experiment.bound.kind",
                        std::holds_alternative<DoublingMap>(exp.map) ? std::string("exp")
                                                                     : std::string("poly"),
                        echo);
  const double bound_c = take<double>(cfg, "experiment.bound.c", 1.0, echo);
  const double bound_q = take<double>(cfg, "experiment.bound.q", 2.0, echo);
  const BoundKind bk = bound_kind == "exp"    ? BoundKind::Exponential
                       : bound_kind == "poly" ? BoundKind::Polynomial
                                              : BoundKind::Weak;
  const double weak_q = take<double>(cfg, "experiment.weak_q", 2.0, echo);

  std::vector<std::vector<double>> rows;
  std::vector<double> ts, ps, bs;
  for (const auto& row : rep.rows) {
    const double b = bound_curve(bk, exp.obs.lip, bound_q, bound_c, row.t);
    rows.push_back({row.t, row.p_hat, row.wilson_lo, row.wilson_hi, b});
    ts.push_back(row.t);
    ps.push_back(row.p_hat);
    bs.push_back(b);
  }
  write_csv(out / "tables" / "deviation.csv", "t,p_hat,wilson_lo,wilson_hi,bound", rows);
  write_plot(out / "plots" / "p_hat.dat", "t", "p_hat", seed, ts, ps);
  write_plot(out / "plots" / "bound.dat", "t", "bound", seed, ts, bs);

  json jr;
  jr["center"] = rep.center;
  jr["failures"] = rep.failures;
  jr["fit_window_points"] = rep.fit_window_points;
  jr["exp_fit"] = fit_to_json(rep.exp_fit);
  jr["poly_fit"] = fit_to_json(rep.poly_fit);
  jr["weak_norm"] = weak_norm(rep.deviations, weak_q);
  jr["weak_norm_q"] = weak_q;
  json jrows = json::array();
  for (const auto& row : rep.rows)
    jrows.push_back({{"t", row.t},
                     {"p_hat", row.p_hat},
                     {"wilson_lo", row.wilson_lo},
                     {"wilson_hi", row.wilson_hi}});
  jr["rows"] = jrows;
  return jr;
}

json cmd_estimator(const json& cfg, const Options& opt, const fs::path& out, json& echo) {
  const std::uint64_t seed = require_seed(cfg, opt, echo);
  enforce_schema(cfg, {"system", "system.kind", "system.alpha", "observable",
                       "observable.kind", "observable.f", "observable.grid",
                       "observable.omega_grid", "observable.lag_max", "observable.eps",
                       "experiment", "experiment.kind", "experiment.master_seed",
                       "experiment.n", "experiment.n_list", "experiment.n_list[]",
                       "experiment.trials", "experiment.pool", "experiment.burn_in",
                       "experiment.threads", "output", "output.dir", "output.plots",
                       "output.tables"});
  const auto map = parse_interval_system(cfg, echo);
  const auto kind = take<std::string>(cfg, "observable.kind", "kantorovich", echo);
  const auto burn_in = take<std::size_t>(cfg, "experiment.burn_in", 10'000, echo);
  const int threads = opt.threads;
  json rep;
  rep["estimator"] = kind;

  const bool doubling = std::holds_alternative<DoublingMap>(map);
  auto reference_cdf = [&]() {
    if (doubling) return PiecewiseLinearCdf::uniform();
    const auto ul = ulam_build(map, 1 << 13);
    return PiecewiseLinearCdf::from_density(ul.density);
  };

  if (kind == "kantorovich") {
    const auto n_list = take<std::vector<std::size_t>>(
        cfg, "experiment.n_list", std::vector<std::size_t>{256, 1024, 4096, 16384, 65536},
        echo);
    const auto trials = take<std::size_t>(cfg, "experiment.trials", 200, echo);
    const auto ref = reference_cdf();
    std::vector<double> log_n, log_d, means;
    std::vector<std::vector<double>> rows;
    for (std::size_t n : n_list) {
      std::vector<double> vals(trials);
      run_indexed_tasks(trials, threads, [&](std::size_t i) {
        RngStream rng = RngStream::substream(seed ^ (0xD1ULL * n), i);
        auto orbit = sample_stationary_orbit(map, rng, n, burn_in);
        std::sort(orbit.begin(), orbit.end());
        vals[i] = kantorovich_1d(orbit, ref);
      });
      const double m = mean(vals);
      means.push_back(m);
      rows.push_back({static_cast<double>(n), m});
      log_n.push_back(std::log(static_cast<double>(n)));
      log_d.push_back(std::log(m));
    }
    write_csv(out / "tables" / "kantorovich.csv", "n,mean_dn", rows);
    std::vector<double> nsd;
    for (std::size_t n : n_list) nsd.push_back(static_cast<double>(n));
    write_plot(out / "plots" / "mean_dn.dat", "n", "mean_dn", seed, nsd, means);
    rep["slope_fit"] = fit_to_json(linear_fit(log_n, log_d));
    rep["mean_dn"] = means;
  } else if (kind == "kde") {
    const auto n = take<std::size_t>(cfg, "experiment.n", 1 << 16, echo);
    const auto grid = take<std::size_t>(cfg, "observable.grid", 1024, echo);
    KernelSpec kspec;
    const double bandwidth = kspec.bandwidth_rule(n);
    RngStream rng(seed);
    const auto orbit = sample_stationary_orbit(map, rng, n, burn_in);
    const auto h = kde_estimate(orbit, grid, bandwidth, kspec);
    std::vector<double> ss(grid);
    for (std::size_t i = 0; i < grid; ++i) ss[i] = (static_cast<double>(i) + 0.5) / grid;
    write_plot(out / "plots" / "density.dat", "s", "h", seed, ss, h);
    double l1 = 0;
    if (doubling) {
      for (double v : h) l1 += std::abs(v - 1.0) / static_cast<double>(grid);
      rep["l1_error_vs_uniform"] = l1;
    } else {
      const auto ul = ulam_build(map, static_cast<int>(grid));
      for (std::size_t i = 0; i < grid; ++i)
        l1 += std::abs(h[i] - ul.density[i]) / static_cast<double>(grid);
      rep["l1_error_vs_ulam"] = l1;
    }
    rep["bandwidth"] = bandwidth;
  } else if (kind == "periodogram") {
    const auto n = take<std::size_t>(cfg, "experiment.n", 1 << 14, echo);
    const auto omega_grid = take<std::size_t>(cfg, "observable.omega_grid", 256, echo);
    const auto trials = take<std::size_t>(cfg, "experiment.trials", 64, echo);
    const auto fname = take<std::string>(cfg, "observable.f", "cos2pi", echo);
    const auto fn = observable_function(fname);
    RngStream ref_rng(seed);
    const auto autocov = autocovariance_reference(map, fn.f, 32, ref_rng);
    std::vector<double> gaps(trials);
    run_indexed_tasks(trials, threads, [&](std::size_t i) {
      RngStream rng = RngStream::substream(seed, i);
      const auto orbit = sample_stationary_orbit(map, rng, n, burn_in);
      std::vector<double> f(n);
      double fm = 0;
      for (std::size_t j = 0; j < n; ++j) fm += fn.f(orbit[j]);
      fm /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) f[j] = fn.f(orbit[j]) - fm;
      gaps[i] = sup_periodogram_gap(f, autocov.values, omega_grid).gap;
    });
    rep["mean_sup_gap"] = mean(gaps);
    rep["omega_grid"] = omega_grid;
    std::vector<double> idx(trials);
    for (std::size_t i = 0; i < trials; ++i) idx[i] = static_cast<double>(i);
    write_plot(out / "plots" / "sup_gap.dat", "trial", "gap", seed, idx, gaps);
  } else if (kind == "covariance") {
    const auto lag_max = take<std::size_t>(cfg, "observable.lag_max", 16, echo);
    const auto fname = take<std::string>(cfg, "observable.f", "cos2pi", echo);
    const auto fn = observable_function(fname);
    RngStream rng(seed);
    const auto ac = autocovariance_reference(map, fn.f, lag_max, rng);
    std::vector<std::vector<double>> rows;
    for (std::size_t l = 0; l <= lag_max; ++l)
      rows.push_back({static_cast<double>(l), ac.values[l], ac.std_errors[l]});
    write_csv(out / "tables" / "autocovariance.csv", "lag,c,stderr", rows);
    rep["c0"] = ac.values[0];
  } else if (kind == "tracing") {
    const auto n = take<std::size_t>(cfg, "experiment.n", 1 << 10, echo);
    const auto pool_size = take<std::size_t>(cfg, "experiment.pool", 1000, echo);
    const double eps = take<double>(cfg, "observable.eps", 0.05, echo);
    RngStream rng(seed);
    const auto orbit = sample_stationary_orbit(map, rng, n, burn_in);
    std::vector<std::vector<double>> pool;
    std::vector<std::vector<double>> rows;
    double prev_s = 2.0;
    bool monotone = true;
    for (std::size_t step = 1; step <= 5; ++step) {
      while (pool.size() < step * pool_size / 5) {
        RngStream prng = RngStream::substream(seed ^ 0xBEEFULL, pool.size());
        // Candidates drawn from A = [0, 1/2]: rejection on the start point.
        std::vector<double> cand;
        do {
          cand = sample_stationary_orbit(map, prng, n, burn_in);
        } while (cand[0] > 0.5);
        pool.push_back(std::move(cand));
      }
      const auto st = tracing_stats(orbit, pool, eps);
      rows.push_back({static_cast<double>(pool.size()), st.s_mean_dist, st.m_mismatch});
      if (st.s_mean_dist > prev_s + 1e-15) monotone = false;
      prev_s = st.s_mean_dist;
    }
    write_csv(out / "tables" / "tracing.csv", "pool,s_mean_dist,m_mismatch", rows);
    rep["pool_monotone"] = monotone;
    rep["final_s"] = rows.back()[1];
    rep["final_m"] = rows.back()[2];
    if (!monotone) throw InvariantError("tracing statistic increased under pool growth");
  } else {
    throw ConfigError("CONFIG_BAD_VALUE", "observable.kind = " + kind);
  }
  return rep;
}

json cmd_seq_check(const json& cfg, const Options& opt, const fs::path& out, json& echo) {
  const std::uint64_t seed = require_seed(cfg, opt, echo);
  enforce_schema(cfg, {"experiment", "experiment.kind", "experiment.master_seed",
                       "experiment.instances", "experiment.grid_max", "experiment.threads",
                       "output", "output.dir", "output.plots", "output.tables"});
  const auto instances = take<std::size_t>(cfg, "experiment.instances", 1000, echo);
  const auto grid_max = take<std::size_t>(cfg, "experiment.grid_max", 64, echo);

  RngStream rng(seed);
  std::size_t sum_violations = 0, dom_violations = 0;
  for (std::size_t trial = 0; trial < instances; ++trial) {
    const std::size_t len = 8 + rng.next_below(120);
    std::vector<double> m(len);
    const double decay = 0.4 + 0.55 * rng.next_double();
    for (std::size_t k = 0; k < len; ++k)
      m[k] = rng.next_double() * std::pow(decay, static_cast<double>(k));
    WeightSystem u(trial % 2 == 0 ? WeightKind::Direct : WeightKind::WindowAverage, m);
    for (std::size_t mm = 1; mm < len; mm += 1 + rng.next_below(4))
      if (weight_sum_over_r(u, mm) > u.sigma() * (1.0 + 1e-12)) ++sum_violations;

    MomentSeq c;
    c.moment_q = 1.0;
    c.values.assign(1024, 0.0);
    const double cdecay = 0.3 + 0.55 * rng.next_double();
    for (std::size_t n = 0; n < c.values.size(); ++n)
      c.values[n] = rng.next_double() * std::pow(cdecay, static_cast<double>(n));
    const auto v = build_weight_v(u, c);
    for (std::size_t k = 2; k <= grid_max; ++k)
      for (std::size_t s = 1; s < k; ++s)
        if (weight_convolution_lhs(u, c.values, s, k) > v.u(s, k) * (1.0 + 1e-12))
          ++dom_violations;
  }
  (void)out;
  json rep;
  rep["instances"] = instances;
  rep["uniform_sum_violations"] = sum_violations;
  rep["domination_violations"] = dom_violations;
  if (sum_violations + dom_violations > 0) throw InvariantError("weight-system lemma violated");
  return rep;
}

json cmd_appendix_mc(const json& cfg, const Options& opt, const fs::path& out, json& echo) {
  const std::uint64_t seed = require_seed(cfg, opt, echo);
  enforce_schema(cfg, {"system", "system.tail", "system.tail.kind", "system.tail.param",
                       "system.cells", "system.tower_seed", "system.beta", "system.rho",
                       "experiment", "experiment.kind", "experiment.master_seed",
                       "experiment.trials", "experiment.orbit_len", "experiment.profiles",
                       "experiment.l_support", "experiment.threads", "output", "output.dir",
                       "output.plots", "output.tables"});
  const auto spec = parse_tower(cfg, echo);
  const auto trials = take<std::size_t>(cfg, "experiment.trials", 2000, echo);
  const int orbit_len = take<int>(cfg, "experiment.orbit_len", 96, echo);
  const auto profiles = take<std::size_t>(cfg, "experiment.profiles", 50, echo);
  const auto support = take<std::size_t>(cfg, "experiment.l_support", 16, echo);
  const int threads = opt.threads;

  RngStream rng(seed);
  std::vector<double> ratios;
  std::vector<std::vector<double>> rows;
  double scale_residual = 0;
  for (std::size_t p = 0; p < profiles; ++p) {
    std::vector<double> weights(support);
    double norm2 = 0;
    for (auto& w : weights) {
      w = 0.1 + rng.next_double();
      norm2 += w * w;
    }
    for (auto& w : weights) w /= std::sqrt(norm2);  // fixed sum L^2 = 1
    const auto rep = technical_theorem_mc(spec, weights, trials, orbit_len,
                                          seed ^ (p * 0x9e3779b97f4a7c15ULL), threads);
    std::vector<double> scaled(weights);
    for (auto& w : scaled) w *= 2.5;
    const auto rep2 = technical_theorem_mc(spec, scaled, trials, orbit_len,
                                           seed ^ (p * 0x9e3779b97f4a7c15ULL), threads);
    scale_residual = std::max(
        scale_residual, std::abs(rep2.ratio - rep.ratio) / std::max(rep.ratio, 1e-300));
    ratios.push_back(rep.ratio);
    rows.push_back({static_cast<double>(p), rep.ratio});
  }
  write_csv(out / "tables" / "appendix_ratios.csv", "profile,ratio", rows);

  const double lo = *std::min_element(ratios.begin(), ratios.end());
  const double hi = *std::max_element(ratios.begin(), ratios.end());
  const double mid = mean(ratios);
  json rep;
  rep["ratio_mean"] = mid;
  rep["ratio_min"] = lo;
  rep["ratio_max"] = hi;
  rep["ratio_spread"] = (hi - lo) / mid;
  rep["scaling_residual"] = scale_residual;
  if (scale_residual > 1e-10) throw InvariantError("homogeneity violated beyond 1e-10");
  return rep;
}

int dispatch(const Options& opt) {
  const json cfg = load_config(opt);
  const fs::path out = resolve_out_dir(opt, cfg);
  fs::create_directories(out);

  json echo;
  echo["experiment"]["kind"] = opt.subcommand;
  if (cfg.contains("experiment") && cfg.at("experiment").contains("kind") &&
      cfg.at("experiment").at("kind").get<std::string>() != opt.subcommand)
    throw ConfigError("CONFIG_BAD_VALUE", "experiment.kind does not match the subcommand");

  json body;
  if (opt.subcommand == "orbit") body = cmd_orbit(cfg, opt, out, echo);
  else if (opt.subcommand == "tower-build") body = cmd_tower_build(cfg, opt, out, echo);
  else if (opt.subcommand == "operator-diagnostics")
    body = cmd_operator_diagnostics(cfg, opt, out, echo);
  else if (opt.subcommand == "martingale-verify")
    body = cmd_martingale_verify(cfg, opt, out, echo);
  else if (opt.subcommand == "deviation") body = cmd_deviation(cfg, opt, out, echo);
  else if (opt.subcommand == "estimator") body = cmd_estimator(cfg, opt, out, echo);
  else if (opt.subcommand == "seq-check") body = cmd_seq_check(cfg, opt, out, echo);
  else if (opt.subcommand == "appendix-mc") body = cmd_appendix_mc(cfg, opt, out, echo);
  else usage_error("unknown subcommand " + opt.subcommand);

  // The echoed config excludes volatile inputs (worker count, output paths)
  // so reports are byte-identical across --threads settings.
  json report;
  report["schema"] = "towerlab-report-v1";
  report["config"] = echo;
  report["result"] = body;
  write_text(out / "report.json", report.dump(2) + "\n");
  return 0;
}

}  // namespace

int run(int argc, char** argv) {
  try {
    return dispatch(parse_args(argc, argv));
  } catch (const ConfigError& e) {
    std::cerr << "error " << e.code << ": " << e.what() << "\n";
    return 1;
  } catch (const InvariantError& e) {
    std::cerr << "invariant FAILED: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error INTERNAL: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace towerlab::cli
