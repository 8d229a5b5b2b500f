#pragma once

#include "hypocert/assumptions.hpp"
#include "hypocert/certificate.hpp"
#include "hypocert/config.hpp"
#include "hypocert/operators.hpp"
#include "hypocert/sde.hpp"
#include "hypocert/semigroup.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hypocert {

inline constexpr const char* kVersion = "1.0.0";

/// One named pass/fail item; the verdict is the conjunction of all of them.
struct Check {
  std::string stage;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct OperatorStageResult {
  int nx = 0;
  int nv = 0;
  PhaseBox box;
  DissipativityResult dissipativity;
  InequalityResult microscopic;
  InequalityResult macroscopic;
  InequalityResult bs_bound;
  double max_abs_L1 = 0.0;
  SpectralGap gap;
  std::vector<std::string> exported;  // MatrixMarket files written
};

/// Exact decay of the linear observables of an Ornstein–Uhlenbeck model
/// (quadratic Φ, constant Σ): ‖T_t − Π‖ on the first chaos is ‖e^{tB}‖₂ with
/// B = [[0, I], [−∇²Φ, −Σ]] in coordinates where μ has identity covariance.
struct OrnsteinUhlenbeckOracle {
  Matrix drift;  // B
  double gap = 0.0;  // min −Re λ(B)
  DecayCurve curve;
};

struct FokkerPlanckSummary {
  DecayCurve curve;
  double initial_mass = 0.0;
  double max_mass_drift = 0.0;
  double min_density = 0.0;
  std::vector<std::string> warnings;
};

struct SdeStageResult {
  std::size_t n_paths = 0;
  double dt = 0.0;
  double burn_in = 0.0;
  std::uint64_t seed = 0;
  Integrator integrator = Integrator::EulerMaruyama;
  std::vector<NamedEstimate> moments;
  std::vector<CovariationEstimate> covariations;
  MixingCurve mixing;
  double integrated_autocorrelation_time = 0.0;
  double effective_sample_size = 0.0;  // moments use independent paths
};

struct ReportBundle {
  ExperimentConfig config;
  std::vector<Stage> stages_run;
  std::optional<AssumptionReport> assumptions;
  std::optional<RateCertificate> certificate;
  std::optional<RateCondition> rate_condition;
  std::optional<OperatorStageResult> operators;
  std::vector<DecayCurve> decay_curves;
  std::optional<FokkerPlanckSummary> fokker_planck;
  std::optional<OrnsteinUhlenbeckOracle> ou_oracle;
  std::optional<SdeStageResult> sde;
  std::vector<Check> checks;
  std::vector<std::string> notes;
  std::map<std::string, double> timings;  // seconds per stage
  bool grid_built = false;

  bool passed() const;
  std::vector<Check> failures() const;
  /// Measured gap: the discrete spectral gap, else the OU drift-matrix gap.
  std::optional<double> measured_gap() const;
};

struct RunOptions {
  std::function<void(const std::string&)> log;  // progress messages; may be empty
  std::string export_dir = ".";                   // target of operators.export
};

/// Runs the enabled stages in dependency order. A stage whose inputs are
/// missing pulls in its prerequisites: operators, semigroup and sde need the
/// certificate, and certify needs the assumption report unless c_sigma,
/// N_sigma and lambda are all given. Stage-level errors are caught and
/// recorded as failed checks.
ReportBundle run(const ExperimentConfig& config, const RunOptions& options = {});

/// Writes report.json, summary.txt, decay_<label>.csv for every decay curve,
/// fokker_planck.csv, ou_oracle.csv and autocovariance_<label>.csv as present.
/// Throws std::runtime_error on I/O failure. Returns the files written.
std::vector<std::string> emit(const ReportBundle& report, const std::string& dir);

/// Plain-text table: model, c_sigma, N_sigma, lambda, theta2, gap, margin at
/// 6 significant digits; only the header when no stage ran.
std::string summary_table(const ReportBundle& report);

/// Exact decay curve for Ornstein–Uhlenbeck models; throws UsageError when Φ
/// is not quadratic or Σ is not constant.
OrnsteinUhlenbeckOracle ou_oracle(const ModelSpec& model, const EvolveOptions& options, double theta1,
                                  double theta2);

}  // namespace hypocert
