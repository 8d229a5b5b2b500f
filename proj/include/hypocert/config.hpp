#pragma once

#include "hypocert/sde.hpp"
#include "hypocert/semigroup.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hypocert {

enum class Stage { Assumptions, Certify, Operators, Semigroup, Sde };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& name);
/// Dependency order: assumptions, certify, operators, semigroup, sde.
const std::vector<Stage>& all_stages();

inline constexpr const char* kConfigSchema = "hypocert/1";

/// Experiment description. The text form is a small TOML subset:
///
///   schema = "hypocert/1"
///   [model]     name = "classic", plus numeric model parameters
///   [grid]      nx, nv
///   [time]      t_end, dt, scheme
///   [operators] test_functions, export
///   [sde]       paths, dt, burn_in, seed, integrator, max_lag, covariation_time
///   [certify]   theta1, c_phi, and optional c_sigma, N_sigma, lambda
///   [run]       stages = [...], threads, out
struct ExperimentConfig {
  std::string model = "classic";
  std::map<std::string, double> model_params;

  int nx = 64;
  int nv = 64;

  double t_end = 10.0;
  double dt = 0.01;
  TimeScheme scheme = TimeScheme::CrankNicolson;

  int test_functions = 50;
  bool export_operators = false;

  std::size_t paths = 100000;
  double sde_dt = 0.01;
  double burn_in = 20.0;
  std::uint64_t seed = 12345;
  Integrator integrator = Integrator::EulerMaruyama;
  double max_lag = 8.0;
  double covariation_time = 1.0;

  double theta1 = 2.0;
  double c_phi = 1.0;
  std::optional<double> c_sigma;
  std::optional<double> N_sigma;
  std::optional<double> lambda;

  std::vector<Stage> stages = all_stages();
  int threads = 1;
  std::optional<std::string> out;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Parses and validates; every error is a ConfigError with a line number
/// where one applies. Unknown sections and keys are rejected.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Canonical text form; parse_config(serialize_config(c)) reproduces c and
/// serialising again gives the same text.
std::string serialize_config(const ExperimentConfig& config);

}  // namespace hypocert
