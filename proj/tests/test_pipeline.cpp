#include "hypocert/config.hpp"
#include "hypocert/errors.hpp"
#include "hypocert/pipeline.hpp"
#include "hypocert/serialize.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

using namespace hypocert;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hypocert_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.nx = 32;
  c.nv = 32;
  c.t_end = 4.0;
  c.dt = 0.02;
  c.test_functions = 10;
  c.paths = 2000;
  c.burn_in = 10.0;
  c.max_lag = 2.0;
  return c;
}

const Check* find_check(const ReportBundle& r, const std::string& stage, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.stage == stage && c.name == name) return &c;
  return nullptr;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HYPOCERT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("certify alone with configured constants skips the grid") {
  ExperimentConfig c;
  c.stages = {Stage::Certify};
  c.c_sigma = 1.0;
  c.N_sigma = 1.0;
  c.lambda = 1.0;
  const ReportBundle r = run(c);
  CHECK(r.stages_run == std::vector<Stage>{Stage::Certify});
  CHECK_FALSE(r.grid_built);
  CHECK_FALSE(r.assumptions.has_value());
  REQUIRE(r.certificate.has_value());
  CHECK(r.certificate->theta2 == doctest::Approx(0.0040794).epsilon(1e-4));
  CHECK(r.passed());
}

TEST_CASE("downstream stages pull in their prerequisites") {
  ExperimentConfig c = small_config();
  c.stages = {Stage::Operators};
  const ReportBundle r = run(c);
  CHECK(r.stages_run == std::vector<Stage>{Stage::Assumptions, Stage::Certify, Stage::Operators});
  CHECK_FALSE(r.notes.empty());
  CHECK(r.grid_built);
  CHECK(r.measured_gap().has_value());
  CHECK(r.passed());
}

TEST_CASE("summary table") {
  ReportBundle empty;
  const std::string header = summary_table(empty);
  CHECK(header.find("model") == 0);
  CHECK(header.find("margin") != std::string::npos);
  CHECK(std::count(header.begin(), header.end(), '\n') == 1);

  ExperimentConfig c;
  c.stages = {Stage::Certify};
  c.c_sigma = 1.0;
  c.N_sigma = 1.0;
  c.lambda = 1.0;
  const std::string table = summary_table(run(c));
  CHECK(std::count(table.begin(), table.end(), '\n') == 2);
  CHECK(table.find("0.00407935") != std::string::npos);
}

TEST_CASE("small full run of the classic model") {
  const ReportBundle r = run(small_config());
  for (const auto& f : r.failures()) MESSAGE(f.stage << "/" << f.name << ": " << f.detail);
  CHECK(r.passed());
  REQUIRE(r.sde.has_value());
  CHECK(r.sde->moments.size() == 5);
  CHECK(find_check(r, "semigroup", "fokker_planck.envelope") != nullptr);

  const fs::path dir = scratch("emit");
  const auto files = emit(r, dir.string());
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "autocovariance_x.csv"));
  CHECK(fs::exists(dir / "fokker_planck.csv"));
  const json j = json::parse(slurp(dir / "report.json"));
  CHECK(j["verdict"] == "PASS");
  CHECK(j["version"] == kVersion);
  CHECK(j["certificate"]["theta2"].get<double>() == r.certificate->theta2);
  fs::remove_all(dir);
}

TEST_CASE("anisotropic model uses the exact oracle") {
  ExperimentConfig c = small_config();
  c.model = "aniso-2d";
  c.stages = {Stage::Operators, Stage::Semigroup};
  const ReportBundle r = run(c);
  CHECK_FALSE(r.grid_built);
  REQUIRE(r.ou_oracle.has_value());
  CHECK(r.ou_oracle->gap == doctest::Approx((3.0 - std::sqrt(5.0)) / 2.0));
  CHECK(r.passed());
}

TEST_CASE("stage errors become failed checks") {
  ExperimentConfig c;
  c.stages = {Stage::Certify};
  c.lambda = 1.0;
  c.N_sigma = 1.0;
  c.c_sigma = 100.0;
  const ReportBundle r = run(c);
  CHECK_FALSE(r.passed());
  REQUIRE(r.failures().size() == 1);
  CHECK(r.failures()[0].stage == "certify");
  CHECK(r.failures()[0].name == "error");
  CHECK_FALSE(r.certificate.has_value());
}

TEST_CASE("command line exit codes and reproducible output") {
  const fs::path dir = scratch("cli");
  {
    std::ofstream cfg(dir / "ok.toml");
    cfg << "schema = \"hypocert/1\"\n[grid]\nnx = 24\nnv = 24\n[time]\nt_end = 3\ndt = 0.05\n"
           "[operators]\ntest_functions = 5\n[sde]\npaths = 1000\nburn_in = 10\nmax_lag = 1\n";
    std::ofstream bad(dir / "bad.toml");
    bad << "schema = \"hypocert/1\"\n[certify]\ntheta1 = 0.5\n";
    std::ofstream fail(dir / "fail.toml");
    fail << "schema = \"hypocert/1\"\n[certify]\nc_sigma = 100\nN_sigma = 1\nlambda = 1\n"
            "[run]\nstages = [\"certify\"]\n";
  }
  const std::string a = (dir / "a").string(), b = (dir / "b").string();
  CHECK(run_cli((dir / "ok.toml").string() + " --out " + a) == 0);
  CHECK(run_cli((dir / "ok.toml").string() + " --out " + b + " --threads 3") == 0);
  for (const char* f : {"decay_x.csv", "decay_smooth0.csv", "fokker_planck.csv", "autocovariance_x.csv",
                        "summary.txt"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(fs::path(a) / f));
    CHECK(slurp(fs::path(a) / f) == slurp(fs::path(b) / f));
  }
  CHECK(run_cli((dir / "bad.toml").string() + " --out " + a) == 2);
  CHECK(run_cli((dir / "missing.toml").string()) == 2);
  CHECK(run_cli((dir / "ok.toml").string() + " --stages certify,plot") == 2);
  CHECK(run_cli((dir / "fail.toml").string() + " --out " + a) == 1);
  CHECK(run_cli((dir / "ok.toml").string() + " --stages certify --out /proc/hypocert") == 1);
  fs::remove_all(dir);
}
