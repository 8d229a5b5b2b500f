#pragma once

#include "hypocert/model.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace hypocert {

/// Axis-aligned box [lower, upper] in ℝᵈ.
struct ProbeBox {
  Vector lower;
  Vector upper;

  static ProbeBox cube(int dim, double halfwidth);
  int dim() const { return static_cast<int>(lower.size()); }
};

/// Tensor grid (odd count per axis, so corners and the centre are included)
/// followed by Halton points until `count` probes exist. Deterministic.
std::vector<Vector> generate_probes(const ProbeBox& box, std::size_t count);

/// A sampled extremum together with the point where it was attained.
struct Witnessed {
  double value = 0.0;
  Vector witness;
};

/// Minimum over the probes of the smallest eigenvalue of Σ(v). This is an
/// upper estimate of c_Σ and only valid on the probed box.
Witnessed estimate_ellipticity(const DiffusionField& field, const ProbeBox& box, std::size_t n_probes,
                               int threads = 1);

struct SigmaConstants {
  Witnessed M_sigma;  // max |aᵢⱼ|
  Witnessed B_sigma;  // max |∂ⱼaᵢⱼ| on the closed unit ball
  GrowthRegime regime = GrowthRegime::Sigma3;
  double beta = 0.0;
  double M = 0.0;         // declared
  double fitted_M = 0.0;  // smallest M consistent with the probes for the declared β
};

/// Throws AssumptionFailure if the declared derivative growth is violated.
SigmaConstants extract_sigma_constants(const DiffusionField& field, const ProbeBox& box, std::size_t n_probes,
                                       int threads = 1);

/// Σ3:  √(M_Σ² + max(B_Σ, M)²)
/// Σ3′: √(M_Σ² + B_Σ² + d·M²)
double compute_N_sigma(double M_sigma, double B_sigma, double M, GrowthRegime regime, int dim);

struct BBoundResult {
  Matrix values;  // ‖∂ⱼaᵢⱼ − aᵢⱼvⱼ‖_{L²(ν)} for each (i, j)
  double N_sigma = 0.0;
  double max_value = 0.0;
  double slack = 0.0;  // N_sigma − max_value
  int order = 0;
};

/// Gauss–Hermite evaluation of the L²(ν) norms bounded by N_Σ.
/// Throws AssumptionFailure when a value exceeds N_Σ + 1e-8.
BBoundResult verify_b_bound(const DiffusionField& field, double N_sigma, int order = 60);

struct PoincareOptions {
  int nodes = 4001;
  double rise = 50.0;  // truncation where Φ exceeds its minimum by this much
};

/// Spectral gap of f ↦ −f″ + Φ′f′ on L²(e^{−Φ}dx) (d = 1), from a
/// symmetric flux-form finite-difference discretisation.
double estimate_poincare(const Potential& potential, const PoincareOptions& options = {});

struct PotentialConditions {
  Witnessed c_hess;         // max |∇²Φ|_F / (1 + |∇Φ|)
  Witnessed fitted_N;       // max |∇Φ| / (1 + |x|^γ) for the declared γ
  Witnessed min_value;      // min Φ on the probes
  double N = 0.0;           // declared
  double gamma = 0.0;       // declared
};

/// Throws AssumptionFailure if the declared gradient growth is violated.
PotentialConditions verify_potential_conditions(const Potential& potential, const ProbeBox& box,
                                                std::size_t n_probes, int threads = 1);

struct ConditionFlag {
  std::string name;
  std::string status;  // "verified", "failed" or "assumed"
  std::string detail;
  std::optional<Vector> witness;

  bool passed() const { return status != "failed"; }
};

struct AssumptionReport {
  std::string model;
  int dim = 1;
  ProbeBox sigma_box;
  ProbeBox potential_box;
  std::size_t n_probes = 0;

  double c_sigma = 0.0;
  Vector c_sigma_witness;
  double M_sigma = 0.0;
  double B_sigma = 0.0;
  double N_sigma = 0.0;
  GrowthRegime regime = GrowthRegime::Sigma3;
  double beta = 0.0;
  double M_growth = 0.0;
  double fitted_M = 0.0;

  double lambda_poincare = 0.0;
  std::string lambda_method;  // "analytic", "eigensolve" or "override"

  double c_hess = 0.0;
  double N_gradgrowth = 0.0;
  double gamma = 0.0;

  BBoundResult b_bound;
  std::vector<ConditionFlag> flags;

  bool all_passed() const;
};

struct AssumptionOptions {
  double sigma_halfwidth = 10.0;
  std::optional<double> potential_halfwidth;  // default: grid truncation width
  std::size_t n_probes = 10000;
  int quadrature_order = 60;
  int threads = 1;
  std::optional<double> lambda_override;
  PoincareOptions poincare;
};

/// Runs every check and records failures as flags instead of throwing.
AssumptionReport build_assumption_report(const ModelSpec& model, const AssumptionOptions& options = {});

/// Half-width of the x-truncation used for grids and potential probes: 8,
/// clamped between the points where Φ rises 30 and 45 above its minimum.
double default_x_halfwidth(const Potential& potential);

}  // namespace hypocert
