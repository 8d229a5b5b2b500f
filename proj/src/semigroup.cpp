#include "hypocert/semigroup.hpp"

#include "hypocert/errors.hpp"
#include "hypocert/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace hypocert {

namespace {

// Norms at or below this are roundoff and are ignored by the curve checks.
constexpr double kRoundoff = 1e-12;

int step_count(const EvolveOptions& o) {
  if (!(o.dt > 0.0) || !(o.t_end > 0.0)) throw UsageError("time stepping needs dt > 0 and t_end > 0");
  if (o.record_every < 1) throw UsageError("record_every must be at least 1");
  const double steps = o.t_end / o.dt;
  const long n = std::lround(steps);
  if (std::abs(steps - static_cast<double>(n)) > 1e-9 * steps) throw UsageError("t_end must be a multiple of dt");
  return static_cast<int>(n);
}

template <class Observe>
void march(const Propagator& prop, Eigen::VectorXd u, int steps, int record_every, Observe&& observe) {
  observe(0.0, u);
  for (int k = 1; k <= steps; ++k) {
    u = prop.step(u);
    if (k % record_every == 0 || k == steps) observe(k * prop.dt(), u);
  }
}

}  // namespace

std::string to_string(TimeScheme scheme) {
  return scheme == TimeScheme::ImplicitEuler ? "implicit-euler" : "crank-nicolson";
}

TimeScheme parse_scheme(const std::string& name) {
  if (name == "implicit-euler") return TimeScheme::ImplicitEuler;
  if (name == "crank-nicolson") return TimeScheme::CrankNicolson;
  throw UsageError("unknown time scheme '" + name + "' (expected implicit-euler or crank-nicolson)");
}

Propagator::Propagator(const DiscreteOperator& op, double dt, TimeScheme scheme) : dt_(dt) {
  if (!(dt > 0.0)) throw UsageError("dt must be positive");
  if (op.has_rank_one()) throw UsageError("cannot evolve a projection");
  const double theta = scheme == TimeScheme::ImplicitEuler ? 1.0 : 0.5;
  const ColMatrix M = op.matrix;
  ColMatrix I(M.rows(), M.cols());
  I.setIdentity();
  implicit_ = I - theta * dt * M;
  explicit_ = I + (1.0 - theta) * dt * M;
  implicit_.makeCompressed();
  const ColMatrix abs_rows = ColMatrix(implicit_.transpose()).cwiseAbs();
  for (Eigen::Index r = 0; r < abs_rows.outerSize(); ++r)
    implicit_norm_ = std::max(implicit_norm_, abs_rows.col(r).sum());
  lu_.compute(implicit_);
  if (lu_.info() != Eigen::Success) throw NumericError("factorisation of the time-step matrix failed: " + lu_.lastErrorMessage());
}

Eigen::VectorXd Propagator::step(const Eigen::VectorXd& u) const {
  const Eigen::VectorXd rhs = explicit_ * u;
  Eigen::VectorXd next = lu_.solve(rhs);
  if (lu_.info() != Eigen::Success) throw NumericError("time-step solve failed");
  // normwise backward error
  const double scale = std::max(implicit_norm_ * next.lpNorm<Eigen::Infinity>() + rhs.lpNorm<Eigen::Infinity>(),
                                std::numeric_limits<double>::min());
  const double residual = (implicit_ * next - rhs).lpNorm<Eigen::Infinity>() / scale;
  if (!(residual <= 1e-10)) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "time-step solve residual %.3e exceeds 1e-10", residual);
    throw NumericError(buf);
  }
  return next;
}

Trajectory evolve(const DiscreteOperator& op, const Eigen::VectorXd& u0, const EvolveOptions& options) {
  const int steps = step_count(options);
  if (u0.size() != op.matrix.cols()) throw UsageError("initial state has the wrong length");
  const Propagator prop(op, options.dt, options.scheme);
  Trajectory out;
  march(prop, u0, steps, options.record_every, [&](double t, const Eigen::VectorXd& u) {
    out.times.push_back(t);
    out.states.push_back(u);
  });
  return out;
}

double step_halving_order(const DiscreteOperator& op, const PhaseGrid& grid, const Eigen::VectorXd& u0,
                          const EvolveOptions& options) {
  std::array<Eigen::VectorXd, 3> finals;
  for (int k = 0; k < 3; ++k) {
    EvolveOptions o = options;
    o.dt = options.dt / (1 << k);
    o.record_every = std::numeric_limits<int>::max();
    const Propagator prop(op, o.dt, o.scheme);
    march(prop, u0, step_count(o), o.record_every, [&](double, const Eigen::VectorXd& u) { finals[k] = u; });
  }
  const double e1 = grid.norm(finals[0] - finals[1]);
  const double e2 = grid.norm(finals[1] - finals[2]);
  return std::log2(e1 / e2);
}

RateFit fit_envelope_rate(const std::vector<double>& times, const std::vector<double>& norms, double t_from,
                          double t_to, double floor) {
  if (times.size() != norms.size() || times.empty()) throw UsageError("rate fit needs matching, non-empty series");
  const double cutoff = floor * norms.front();
  std::vector<double> ts, ys;
  std::size_t in_window = 0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t_from - 1e-12 || times[k] > t_to + 1e-12) continue;
    ++in_window;
    if (norms[k] <= cutoff || norms[k] <= 0.0) continue;
    ts.push_back(times[k]);
    ys.push_back(std::log(norms[k]));
  }
  if (in_window < 2) throw UsageError("rate fit window holds fewer than two samples");
  RateFit fit;
  fit.points = ts.size();
  if (ts.size() < 2) {
    fit.rate = std::numeric_limits<double>::infinity();
    return fit;
  }

  // least concave majorant of the log norms (upper hull, monotone chain)
  std::vector<std::size_t> hull;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    while (hull.size() >= 2) {
      const std::size_t a = hull[hull.size() - 2], b = hull.back();
      const double cross = (ts[b] - ts[a]) * (ys[k] - ys[a]) - (ys[b] - ys[a]) * (ts[k] - ts[a]);
      if (cross < 0.0) break;
      hull.pop_back();
    }
    hull.push_back(k);
  }
  std::vector<double> upper(ts.size());
  for (std::size_t h = 0; h + 1 < hull.size(); ++h) {
    const std::size_t a = hull[h], b = hull[h + 1];
    for (std::size_t k = a; k <= b; ++k) upper[k] = ys[a] + (ys[b] - ys[a]) * (ts[k] - ts[a]) / (ts[b] - ts[a]);
  }

  const double n = static_cast<double>(ts.size());
  const double tm = pairwise_sum(ts) / n;
  const double ym = pairwise_sum(upper) / n;
  std::vector<double> sxy(ts.size()), sxx(ts.size());
  for (std::size_t k = 0; k < ts.size(); ++k) {
    sxy[k] = (ts[k] - tm) * (upper[k] - ym);
    sxx[k] = (ts[k] - tm) * (ts[k] - tm);
  }
  const double slope = pairwise_sum(sxy) / pairwise_sum(sxx);
  fit.rate = -slope;
  fit.prefactor = std::exp(ym - slope * tm);
  return fit;
}

double DecayCurve::max_increase() const {
  double worst = 0.0;
  for (std::size_t k = 1; k < norms.size(); ++k) {
    if (norms[k - 1] <= kRoundoff) continue;
    worst = std::max(worst, norms[k] / norms[k - 1] - 1.0);
  }
  return worst;
}

double DecayCurve::max_envelope_ratio() const {
  double worst = 0.0;
  for (std::size_t k = 0; k < norms.size(); ++k) {
    if (norms[k] <= kRoundoff) continue;
    worst = std::max(worst, norms[k] / envelope[k]);
  }
  return worst;
}

namespace {

DecayCurve run_curve(const Propagator& prop, const PhaseGrid& grid, const Eigen::VectorXd& g,
                     const EvolveOptions& options, double theta1, double theta2, std::string label) {
  if (g.size() != static_cast<Eigen::Index>(grid.size())) throw UsageError("observable has the wrong length");
  DecayCurve c;
  c.label = std::move(label);
  c.theta1 = theta1;
  c.theta2 = theta2;
  c.equilibrium_mean = grid.mean(g);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(g.size());
  const double n0 = grid.norm(g - c.equilibrium_mean * one);
  if (n0 <= 1e-10 * std::max(1.0, grid.norm(g))) throw UsageError("observable '" + c.label + "' is constant");
  march(prop, g, step_count(options), options.record_every, [&](double t, const Eigen::VectorXd& u) {
    c.times.push_back(t);
    c.norms.push_back(grid.norm(u - c.equilibrium_mean * one));
    c.envelope.push_back(theta1 * std::exp(-theta2 * t) * n0);
  });
  c.window_start = options.t_end / 5.0;
  c.window_end = options.t_end;
  c.fit = fit_envelope_rate(c.times, c.norms, c.window_start, c.window_end);
  return c;
}

}  // namespace

DecayCurve decay_curve(const DiscreteOperator& op, const PhaseGrid& grid, const Eigen::VectorXd& g,
                       const EvolveOptions& options, double theta1, double theta2, std::string label) {
  step_count(options);
  const Propagator prop(op, options.dt, options.scheme);
  return run_curve(prop, grid, g, options, theta1, theta2, std::move(label));
}

std::vector<DecayCurve> decay_curves(const DiscreteOperator& op, const PhaseGrid& grid,
                                     const std::vector<Eigen::VectorXd>& observables,
                                     const std::vector<std::string>& labels, const EvolveOptions& options,
                                     double theta1, double theta2, int threads) {
  if (labels.size() != observables.size()) throw UsageError("one label per observable required");
  step_count(options);
  const Propagator prop(op, options.dt, options.scheme);
  std::vector<DecayCurve> out(observables.size());
  parallel_for(observables.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) out[k] = run_curve(prop, grid, observables[k], options, theta1, theta2, labels[k]);
  });
  return out;
}

FokkerPlanckRun evolve_fokker_planck(const DiscreteOperator& L_FP, const PhaseGrid& grid,
                                     const Eigen::VectorXd& rho0, const EvolveOptions& options, double theta1,
                                     double theta2) {
  if (L_FP.kind != OperatorKind::L_FP) throw UsageError("evolve_fokker_planck needs the L_FP operator");
  if (rho0.size() != static_cast<Eigen::Index>(grid.size())) throw UsageError("density has the wrong length");
  if (rho0.minCoeff() < 0.0) throw UsageError("initial density must be nonnegative");
  FokkerPlanckRun run;
  run.initial_mass = grid.mass(rho0);
  if (std::abs(run.initial_mass - 1.0) > 1e-6) throw UsageError("initial density must have unit mass");

  const Eigen::VectorXd rho = grid.density();
  const Eigen::VectorXd equilibrium = rho * (run.initial_mass / grid.mass(rho));
  const double n0 = grid.fp_norm(rho0 - equilibrium);
  run.min_density = rho0.minCoeff();

  const int steps = step_count(options);
  const Propagator prop(L_FP, options.dt, options.scheme);
  DecayCurve& c = run.curve;
  c.label = "fokker-planck";
  c.theta1 = theta1;
  c.theta2 = theta2;
  c.equilibrium_mean = run.initial_mass;
  Eigen::VectorXd u = rho0;
  auto record = [&](double t) {
    c.times.push_back(t);
    c.norms.push_back(grid.fp_norm(u - equilibrium));
    c.envelope.push_back(theta1 * std::exp(-theta2 * t) * n0);
    run.trajectory.times.push_back(t);
    run.trajectory.states.push_back(u);
  };
  record(0.0);
  for (int k = 1; k <= steps; ++k) {
    u = prop.step(u);
    run.max_mass_drift = std::max(run.max_mass_drift, std::abs(grid.mass(u) - run.initial_mass));
    run.min_density = std::min(run.min_density, u.minCoeff());
    if (k % options.record_every == 0 || k == steps) record(k * options.dt);
  }
  if (run.min_density < -1e-6) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "density undershoot %.3e below -1e-6: scheme quality degraded", run.min_density);
    run.warnings.emplace_back(buf);
  }
  if (run.max_mass_drift > 1e-8) run.warnings.emplace_back("mass drift exceeds 1e-8");
  c.window_start = options.t_end / 5.0;
  c.window_end = options.t_end;
  if (n0 > kRoundoff) c.fit = fit_envelope_rate(c.times, c.norms, c.window_start, c.window_end);
  return run;
}

Eigen::VectorXd tilted_density(const PhaseGrid& grid, double a, double b) {
  Eigen::VectorXd log_u(static_cast<Eigen::Index>(grid.size()));
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.nv; ++j)
      log_u[grid.index(i, j)] = grid.x_log_density[i] + grid.v_log_density[j] + a * grid.x_nodes[i] + b * grid.v_nodes[j];
  const Eigen::VectorXd u = (log_u.array() - log_u.maxCoeff()).exp();
  return u / grid.mass(u);
}

void write_decay_csv(const DecayCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path);
  out << "t,norm,envelope,fit,residual\n";
  char line[160];
  for (std::size_t k = 0; k < curve.times.size(); ++k) {
    const double fit =
        std::isfinite(curve.fit.rate) ? curve.fit.prefactor * std::exp(-curve.fit.rate * curve.times[k]) : 0.0;
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g\n", curve.times[k], curve.norms[k],
                  curve.envelope[k], fit, curve.norms[k] - fit);
    out << line;
  }
  if (!out) throw Error("write failed for " + path);
}

}  // namespace hypocert
