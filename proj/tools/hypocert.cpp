#include "hypocert/config.hpp"
#include "hypocert/errors.hpp"
#include "hypocert/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

// Exit codes: 0 verdict PASS, 1 a check failed or output could not be
// written, 2 configuration error.
int main(int argc, char** argv) {
  CLI::App app{"Certified convergence rates for kinetic Langevin dynamics"};
  std::string config_path;
  std::string stages;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  bool verbose = false;
  app.add_option("config", config_path, "experiment config (TOML subset)")->required();
  app.add_option("--stages", stages, "comma-separated subset of assumptions,certify,operators,semigroup,sde");
  app.add_option("--out", out_dir, "output directory (default: run.out, then $HYPOCERT_OUT, then hypocert-out)");
  auto* seed_opt = app.add_option("--seed", seed, "seed for the SDE ensemble and random test functions");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", verbose, "progress messages on stderr");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  hypocert::ExperimentConfig config;
  try {
    config = hypocert::load_config(config_path);
    if (!stages.empty()) {
      config.stages.clear();
      std::stringstream list(stages);
      std::string name;
      std::vector<bool> seen(hypocert::all_stages().size(), false);
      while (std::getline(list, name, ',')) {
        if (name.empty()) continue;
        const auto s = hypocert::parse_stage(name);
        seen[static_cast<std::size_t>(s)] = true;
      }
      for (hypocert::Stage s : hypocert::all_stages())
        if (seen[static_cast<std::size_t>(s)]) config.stages.push_back(s);
    }
    if (*seed_opt) config.seed = seed;
    if (threads > 0) config.threads = threads;
    config.validate();
  } catch (const hypocert::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  std::string dir = out_dir;
  if (dir.empty() && config.out) dir = *config.out;
  if (dir.empty()) {
    const char* env = std::getenv("HYPOCERT_OUT");
    dir = env && *env ? env : "hypocert-out";
  }

  hypocert::RunOptions options;
  options.export_dir = dir;
  if (verbose) options.log = [](const std::string& msg) { std::cerr << "[hypocert] " << msg << "\n"; };

  hypocert::ReportBundle report;
  try {
    report = hypocert::run(config, options);
  } catch (const hypocert::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    const auto files = hypocert::emit(report, dir);
    if (verbose)
      for (const auto& f : files) std::cerr << "[hypocert] wrote " << f << "\n";
  } catch (const std::exception& e) {
    std::cerr << "output error: " << e.what() << "\n";
    return 1;
  }

  std::cout << hypocert::summary_table(report);
  if (report.passed()) {
    std::cout << "verdict: PASS\n";
    return 0;
  }
  std::cout << "verdict: FAIL\n";
  for (const auto& c : report.failures())
    std::cerr << "failed check " << c.stage << "/" << c.name << ": " << c.detail << "\n";
  return 1;
}
