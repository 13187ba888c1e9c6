#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "towerlab-cli-tests";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TOWERLAB_CLI_PATH) + " " + args + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("exit codes: usage, unknown key, missing seed") {
  fs::create_directories(kWork);
  CHECK(run_cli("") == 1);
  CHECK(run_cli("no-such-subcommand --seed 1") == 1);

  write(kWork / "bad.json", R"({"nonsense": true, "experiment": {"master_seed": 1}})");
  CHECK(run_cli("deviation --config " + (kWork / "bad.json").string() + " --out " +
                (kWork / "o1").string()) == 1);

  write(kWork / "noseed.json", R"({"experiment": {"trials": 10}})");
  CHECK(run_cli("deviation --config " + (kWork / "noseed.json").string() + " --out " +
                (kWork / "o2").string()) == 1);

  write(kWork / "badval.json", R"({"system": {"kind": "lorenz"}, "experiment": {"master_seed": 1}})");
  CHECK(run_cli("orbit --config " + (kWork / "badval.json").string() + " --out " +
                (kWork / "o3").string()) == 1);
}

TEST_CASE("orbit subcommand writes tables and plots") {
  const auto out = kWork / "orbit";
  fs::remove_all(out);
  CHECK(run_cli("orbit --seed 5 --set experiment.n=16 --set experiment.x0=0.2 --out " +
                out.string()) == 0);
  CHECK(fs::exists(out / "report.json"));
  CHECK(fs::exists(out / "tables" / "orbit.csv"));
  const std::string plot = slurp(out / "plots" / "orbit.dat");
  CHECK(plot.rfind("# k x seed=5", 0) == 0);
  CHECK(slurp(out / "report.json").find("\"mean\"") != std::string::npos);
}

TEST_CASE("tower-build round trips and reports invariants") {
  const auto out = kWork / "tower";
  CHECK(run_cli("tower-build --seed 1 --set system.cells=12 --out " + out.string()) == 0);
  const std::string rep = slurp(out / "report.json");
  CHECK(rep.find("\"round_trip_exact\": true") != std::string::npos);
  CHECK(fs::exists(out / "tower.json"));
}

TEST_CASE("martingale-verify exits 0 with tiny residuals") {
  const auto out = kWork / "mart";
  CHECK(run_cli("martingale-verify --seed 7 --set experiment.batch=20 --out " +
                out.string()) == 0);
  CHECK(slurp(out / "report.json").find("worst_martingale_residual") != std::string::npos);
}

TEST_CASE("seq-check runs the lemma batteries") {
  const auto out = kWork / "seq";
  CHECK(run_cli("seq-check --seed 2 --set experiment.instances=50 --out " + out.string()) == 0);
  CHECK(slurp(out / "report.json").find("\"domination_violations\": 0") != std::string::npos);
}

TEST_CASE("deviation: threads do not change the report, config echo round-trips") {
  const auto base = "deviation --seed 3 --set experiment.trials=400 --set observable.n=128";
  const auto o1 = kWork / "dev1", o8 = kWork / "dev8", o2 = kWork / "dev2";
  CHECK(run_cli(std::string(base) + " --threads 1 --out " + o1.string()) == 0);
  CHECK(run_cli(std::string(base) + " --threads 8 --out " + o8.string()) == 0);
  CHECK(slurp(o1 / "report.json") == slurp(o8 / "report.json"));

  // Re-running from the echoed effective config reproduces the report.
  const std::string rep = slurp(o1 / "report.json");
  const auto cfg_pos = rep.find("\"config\": ");
  REQUIRE(cfg_pos != std::string::npos);
  // Extract the config object by brace counting.
  std::size_t start = rep.find('{', cfg_pos);
  int depth = 0;
  std::size_t end = start;
  for (std::size_t i = start; i < rep.size(); ++i) {
    if (rep[i] == '{') ++depth;
    if (rep[i] == '}') {
      if (--depth == 0) {
        end = i + 1;
        break;
      }
    }
  }
  write(kWork / "echo.json", rep.substr(start, end - start));
  CHECK(run_cli("deviation --config " + (kWork / "echo.json").string() + " --out " +
                o2.string()) == 0);
  CHECK(slurp(o2 / "report.json") == rep);
}

TEST_CASE("estimator: covariance table via quadrature") {
  const auto out = kWork / "cov";
  CHECK(run_cli("estimator --seed 4 --set observable.kind=covariance --set "
                "observable.lag_max=4 --out " +
                out.string()) == 0);
  const std::string csv = slurp(out / "tables" / "autocovariance.csv");
  CHECK(csv.rfind("lag,c,stderr", 0) == 0);
  CHECK(slurp(out / "report.json").find("\"c0\": 0.5") != std::string::npos);
}

TEST_CASE("operator-diagnostics on a small tower") {
  const auto out = kWork / "opd";
  CHECK(run_cli("operator-diagnostics --seed 6 --set system.cells=16 --set "
                "experiment.n_max=256 --set experiment.decomposition_n=10 --set "
                "experiment.psi_mc_samples=20000 --threads 2 --out " +
                out.string()) == 0);
  const std::string rep = slurp(out / "report.json");
  CHECK(rep.find("decomposition_residual") != std::string::npos);
  CHECK(fs::exists(out / "plots" / "t_minus_pi.dat"));
  CHECK(fs::exists(out / "tables" / "psi_integral.csv"));
}

TEST_CASE("appendix-mc homogeneity gate") {
  const auto out = kWork / "amc";
  CHECK(run_cli("appendix-mc --seed 8 --set experiment.profiles=3 --set "
                "experiment.trials=200 --set system.cells=16 --set experiment.orbit_len=48 "
                "--threads 2 --out " +
                out.string()) == 0);
  CHECK(slurp(out / "report.json").find("scaling_residual") != std::string::npos);
}

TEST_CASE("TOWERLAB_OUT is honored as the default output directory") {
  const auto out = kWork / "envout";
  fs::remove_all(out);
  const std::string cmd = std::string("TOWERLAB_OUT=") + out.string() + " " +
                          TOWERLAB_CLI_PATH +
                          " orbit --seed 9 --set experiment.n=4 2>/dev/null";
  CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  CHECK(fs::exists(out / "report.json"));
}

TEST_CASE("missing series is an input error") {
  const auto out = kWork / "empty";
  CHECK(run_cli("estimator --seed 9 --set observable.kind=kantorovich --set "
                "experiment.n_list=[] --out " +
                out.string()) == 1);
}
