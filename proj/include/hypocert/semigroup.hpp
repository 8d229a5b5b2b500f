#pragma once

#include "hypocert/operators.hpp"

#include <Eigen/SparseLU>

#include <string>
#include <vector>

namespace hypocert {

enum class TimeScheme { ImplicitEuler, CrankNicolson };

std::string to_string(TimeScheme scheme);
/// Accepts "implicit-euler" and "crank-nicolson".
TimeScheme parse_scheme(const std::string& name);

struct EvolveOptions {
  double t_end = 10.0;
  double dt = 0.01;
  TimeScheme scheme = TimeScheme::CrankNicolson;
  int record_every = 10;  // steps between stored states
};

/// One-step map u ↦ (I − θ dt M)⁻¹ (I + (1−θ) dt M) u for θ = 1 or 1/2,
/// factorised once. Every solve is checked to normwise backward error 1e-10.
class Propagator {
 public:
  Propagator(const DiscreteOperator& op, double dt, TimeScheme scheme);

  Eigen::VectorXd step(const Eigen::VectorXd& u) const;
  double dt() const { return dt_; }

 private:
  using ColMatrix = Eigen::SparseMatrix<double>;
  double dt_;
  ColMatrix implicit_;
  ColMatrix explicit_;
  Eigen::SparseLU<ColMatrix, Eigen::COLAMDOrdering<int>> lu_;
  double implicit_norm_ = 0.0;  // ‖implicit_‖∞
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
};

Trajectory evolve(const DiscreteOperator& op, const Eigen::VectorXd& u0, const EvolveOptions& options);

/// Observed order of the scheme at t_end from runs with dt, dt/2 and dt/4:
/// log₂(‖u_dt − u_{dt/2}‖ / ‖u_{dt/2} − u_{dt/4}‖), norms in μ.
double step_halving_order(const DiscreteOperator& op, const PhaseGrid& grid, const Eigen::VectorXd& u0,
                          const EvolveOptions& options);

struct RateFit {
  double rate = 0.0;
  double prefactor = 0.0;
  std::size_t points = 0;
};

/// Least-squares fit of log n(t) = log C − r t over t ∈ [t_from, t_to],
/// applied to the least concave majorant of log n (the line through the
/// peaks of an oscillating decay) so that oscillation is not mistaken for
/// faster decay. Values below floor·n(0) are ignored.
RateFit fit_envelope_rate(const std::vector<double>& times, const std::vector<double>& norms, double t_from,
                          double t_to, double floor = 1e-12);

struct DecayCurve {
  std::string label;
  std::vector<double> times;
  std::vector<double> norms;     // ‖u(t) − equilibrium‖
  std::vector<double> envelope;  // θ₁ e^{−θ₂t} ‖u(0) − equilibrium‖
  double equilibrium_mean = 0.0;
  double theta1 = 0.0;
  double theta2 = 0.0;
  double window_start = 0.0;
  double window_end = 0.0;
  RateFit fit;

  /// Largest relative step-to-step increase of the norms.
  double max_increase() const;
  /// Largest norms[i]/envelope[i].
  double max_envelope_ratio() const;

  bool monotone(double wiggle = 0.005) const { return max_increase() <= wiggle; }
  bool within_envelope(double slack = 0.02) const { return max_envelope_ratio() <= 1.0 + slack; }
  bool rate_certified(double slack = 0.02) const { return fit.rate >= theta2 * (1.0 - slack); }
  bool passed() const { return monotone() && within_envelope() && rate_certified(); }
};

/// Evolves g under op and records ‖T_t g − (g,1)_μ‖_μ.
/// Throws UsageError when g is constant.
DecayCurve decay_curve(const DiscreteOperator& op, const PhaseGrid& grid, const Eigen::VectorXd& g,
                       const EvolveOptions& options, double theta1, double theta2, std::string label = "g");

/// Independent observables share one factorisation and run on up to
/// `threads` threads; the result order follows `observables`.
std::vector<DecayCurve> decay_curves(const DiscreteOperator& op, const PhaseGrid& grid,
                                     const std::vector<Eigen::VectorXd>& observables,
                                     const std::vector<std::string>& labels, const EvolveOptions& options,
                                     double theta1, double theta2, int threads = 1);

struct FokkerPlanckRun {
  DecayCurve curve;  // H̃ distance to the equilibrium with the same mass
  double initial_mass = 0.0;
  double max_mass_drift = 0.0;
  double min_density = 0.0;
  std::vector<std::string> warnings;
  Trajectory trajectory;
};

/// Evolves a probability density under L_FP. rho0 must be nonnegative with
/// unit Lebesgue mass (1e-6). A dip below −1e-6 is recorded as a warning.
FokkerPlanckRun evolve_fokker_planck(const DiscreteOperator& L_FP, const PhaseGrid& grid,
                                     const Eigen::VectorXd& rho0, const EvolveOptions& options, double theta1,
                                     double theta2);

/// ρ(x, v)·e^{a x + b v} rescaled to unit mass on the grid. For the classic
/// model this is the Gaussian shifted to (a, b).
Eigen::VectorXd tilted_density(const PhaseGrid& grid, double a, double b);

/// CSV with columns t,norm,envelope,fit,residual (residual = norm − fit).
void write_decay_csv(const DecayCurve& curve, const std::string& path);

}  // namespace hypocert
