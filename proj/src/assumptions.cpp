#include "hypocert/assumptions.hpp"

#include "hypocert/errors.hpp"
#include "hypocert/parallel.hpp"
#include "hypocert/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace hypocert {

namespace {

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

double radical_inverse(std::size_t index, int base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

std::string vec_string(const Vector& v) {
  std::ostringstream os;
  os << "(";
  for (int k = 0; k < v.size(); ++k) os << (k ? ", " : "") << v[k];
  os << ")";
  return os.str();
}

std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

using ScalarField = std::function<double(const Vector&)>;

struct Domain {
  const ProbeBox* box;
  double ball_radius = std::numeric_limits<double>::infinity();

  bool admits(const Vector& x) const {
    for (int k = 0; k < x.size(); ++k)
      if (x[k] < box->lower[k] || x[k] > box->upper[k]) return false;
    return x.norm() <= ball_radius;
  }
};

// Compass search started at the best probe; only ever improves the sample.
Witnessed refine_max(const ScalarField& f, Witnessed best, const Domain& domain, double step) {
  while (step > 1e-10) {
    bool improved = false;
    for (int k = 0; k < best.witness.size(); ++k) {
      for (double sign : {1.0, -1.0}) {
        Vector y = best.witness;
        y[k] += sign * step;
        if (!domain.admits(y)) continue;
        const double fy = f(y);
        if (fy > best.value) {
          best = {fy, y};
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return best;
}

Witnessed sup_over(const ScalarField& f, const std::vector<Vector>& probes, const Domain& domain, int threads,
                   bool refine = true) {
  std::vector<double> values(probes.size());
  parallel_for(probes.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) values[k] = f(probes[k]);
  });
  std::size_t arg = 0;
  for (std::size_t k = 1; k < values.size(); ++k)
    if (values[k] > values[arg]) arg = k;
  Witnessed best{values[arg], probes[arg]};
  if (!refine) return best;
  const ProbeBox& box = *domain.box;
  const double width = (box.upper - box.lower).maxCoeff();
  return refine_max(f, best, domain, width / std::sqrt(static_cast<double>(probes.size())));
}

double min_eigenvalue(const Matrix& a) {
  if (a.rows() == 1) return a(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::EigenvaluesOnly);
  return solver.eigenvalues()[0];
}

double growth_profile(const Vector& v, const GrowthBound& g) {
  const double r = v.norm();
  if (g.regime == GrowthRegime::Sigma3) return std::pow(1.0 + r, g.beta);
  return (r < 1.0 ? 1.0 : 0.0) + std::pow(r, g.beta);
}

double max_abs_derivative(const DiffusionField& field, const Vector& v) {
  double m = 0.0;
  for (const Matrix& dk : field.gradient(v)) m = std::max(m, dk.cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

ProbeBox ProbeBox::cube(int dim, double halfwidth) {
  return ProbeBox{Vector::Constant(dim, -halfwidth), Vector::Constant(dim, halfwidth)};
}

std::vector<Vector> generate_probes(const ProbeBox& box, std::size_t count) {
  const int d = box.dim();
  if (d < 1 || d > static_cast<int>(std::size(kPrimes))) throw UsageError("probe box dimension out of range");
  if (count == 0) throw UsageError("at least one probe is required");
  for (int k = 0; k < d; ++k)
    if (!(box.upper[k] >= box.lower[k])) throw UsageError("degenerate probe box");

  std::vector<Vector> probes;
  probes.reserve(count);
  auto per_axis = static_cast<std::size_t>(std::floor(std::pow(std::max<double>(count / 2, 1), 1.0 / d)));
  if (per_axis % 2 == 0) --per_axis;
  if (per_axis >= 3) {
    std::vector<std::size_t> idx(d, 0);
    while (probes.size() < count) {
      Vector p(d);
      for (int k = 0; k < d; ++k)
        p[k] = box.lower[k] + (box.upper[k] - box.lower[k]) * static_cast<double>(idx[k]) / (per_axis - 1);
      probes.push_back(p);
      int k = 0;
      while (k < d && ++idx[k] == per_axis) idx[k++] = 0;
      if (k == d) break;
    }
  } else {
    probes.push_back(0.5 * (box.lower + box.upper));
  }
  for (std::size_t n = 1; probes.size() < count; ++n) {
    Vector p(d);
    for (int k = 0; k < d; ++k)
      p[k] = box.lower[k] + (box.upper[k] - box.lower[k]) * radical_inverse(n, kPrimes[k]);
    probes.push_back(p);
  }
  return probes;
}

Witnessed estimate_ellipticity(const DiffusionField& field, const ProbeBox& box, std::size_t n_probes,
                               int threads) {
  if (n_probes < 1) throw UsageError("estimate_ellipticity needs at least one probe");
  const auto probes = generate_probes(box, n_probes);
  const Domain domain{&box};
  const Witnessed neg = sup_over([&](const Vector& v) { return -min_eigenvalue(field.matrix(v)); }, probes, domain,
                                 threads);
  Witnessed out{-neg.value, neg.witness};
  if (!(out.value > 0.0)) {
    throw EllipticityViolation("Sigma(v) has non-positive smallest eigenvalue " + std::to_string(out.value) +
                                   " at v = " + vec_string(out.witness),
                               to_std(out.witness), 0);
  }
  return out;
}

SigmaConstants extract_sigma_constants(const DiffusionField& field, const ProbeBox& box, std::size_t n_probes,
                                       int threads) {
  const int d = field.dim();
  for (int k = 0; k < d; ++k) {
    if (box.lower[k] > -1.0 || box.upper[k] < 1.0) throw UsageError("probe box must contain the unit ball");
  }
  const auto probes = generate_probes(box, n_probes);
  SigmaConstants out;
  out.M_sigma = sup_over([&](const Vector& v) { return field.matrix(v).cwiseAbs().maxCoeff(); }, probes,
                         Domain{&box}, threads);

  const ProbeBox unit = ProbeBox::cube(d, 1.0);
  std::vector<Vector> ball;
  for (auto& p : generate_probes(unit, n_probes))
    if (p.norm() <= 1.0) ball.push_back(p);
  out.B_sigma = sup_over(
      [&](const Vector& v) {
        const auto da = field.gradient(v);
        double m = 0.0;
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) m = std::max(m, std::abs(da[j](i, j)));
        return m;
      },
      ball, Domain{&unit, 1.0}, threads);

  const GrowthBound& g = field.growth();
  out.regime = g.regime;
  out.beta = g.beta;
  out.M = g.M;
  if (g.regime == GrowthRegime::Sigma3 && g.beta > 0.0)
    throw AssumptionFailure("Sigma3 growth requires beta <= 0", "Sigma3", {});
  if (g.regime == GrowthRegime::Sigma3Prime && !(g.beta > 0.0 && g.beta < 1.0))
    throw AssumptionFailure("Sigma3' growth requires 0 < beta < 1", "Sigma3'", {});

  // Smallest M compatible with the probes; the Σ3′ profile jumps at |v| = 1,
  // so refinement is skipped there.
  out.fitted_M =
      sup_over([&](const Vector& v) { return max_abs_derivative(field, v) / growth_profile(v, g); }, probes,
               Domain{&box}, threads, g.regime == GrowthRegime::Sigma3)
          .value;
  const auto violation = sup_over(
      [&](const Vector& v) { return max_abs_derivative(field, v) - g.M * growth_profile(v, g) * (1.0 + 1e-9); },
      probes, Domain{&box}, threads, false);
  if (violation.value > 1e-12) {
    throw AssumptionFailure("declared derivative growth bound (M = " + std::to_string(g.M) +
                                ") violated at v = " + vec_string(violation.witness),
                            to_string(g.regime), to_std(violation.witness));
  }
  return out;
}

double compute_N_sigma(double M_sigma, double B_sigma, double M, GrowthRegime regime, int dim) {
  if (regime == GrowthRegime::Sigma3) {
    const double b = std::max(B_sigma, M);
    return std::sqrt(M_sigma * M_sigma + b * b);
  }
  return std::sqrt(M_sigma * M_sigma + B_sigma * B_sigma + dim * M * M);
}

BBoundResult verify_b_bound(const DiffusionField& field, double N_sigma, int order) {
  if (order < 40) throw UsageError("verify_b_bound needs a Gauss-Hermite order of at least 40");
  const int d = field.dim();
  const GaussHermiteRule rule = gauss_hermite(order);
  BBoundResult out;
  out.values = Matrix::Zero(d, d);
  out.N_sigma = N_sigma;
  out.order = order;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const double second_moment = integrate_gaussian(d, rule, [&](std::span<const double> v) {
        const Vector vv = Eigen::Map<const Vector>(v.data(), d);
        const double r = field.gradient(vv)[j](i, j) - field.matrix(vv)(i, j) * v[j];
        return r * r;
      });
      out.values(i, j) = std::sqrt(second_moment);
    }
  }
  out.max_value = out.values.maxCoeff();
  out.slack = N_sigma - out.max_value;
  if (out.slack < -1e-8) {
    Eigen::Index i = 0, j = 0;
    out.values.maxCoeff(&i, &j);
    std::ostringstream os;
    os << "L2(nu) norm of d_j a_ij - a_ij v_j for (i, j) = (" << i << ", " << j << ") is " << out.max_value
       << " > N_sigma = " << N_sigma;
    throw AssumptionFailure(os.str(), "b-bound", {static_cast<double>(i), static_cast<double>(j)});
  }
  return out;
}

double estimate_poincare(const Potential& potential, const PoincareOptions& options) {
  if (potential.dim() != 1) throw UsageError("estimate_poincare is only available in one dimension");
  if (options.nodes < 16) throw UsageError("estimate_poincare needs at least 16 nodes");
  const double half = potential.truncation_halfwidth(options.rise);
  const int n = options.nodes;
  const double h = 2.0 * half / (n - 1);
  auto phi = [&](double x) { return potential.value(std::span<const double>(&x, 1)); };

  Eigen::VectorXd node_phi(n);
  for (int k = 0; k < n; ++k) node_phi[k] = phi(-half + k * h);
  Eigen::VectorXd mid_phi(n - 1);
  for (int k = 0; k + 1 < n; ++k) mid_phi[k] = phi(-half + (k + 0.5) * h);

  // B = M^{-1/2} K M^{-1/2} with M = diag(p h) and K the flux-form stiffness
  // Σ p̄ (Δf)²/h; all density ratios are taken in log space.
  Eigen::VectorXd diag(n), sub(n - 1);
  for (int k = 0; k < n; ++k) {
    double s = 0.0;
    if (k > 0) s += std::exp(node_phi[k] - mid_phi[k - 1]);
    if (k + 1 < n) s += std::exp(node_phi[k] - mid_phi[k]);
    diag[k] = s / (h * h);
  }
  for (int k = 0; k + 1 < n; ++k)
    sub[k] = -std::exp(0.5 * (node_phi[k] + node_phi[k + 1]) - mid_phi[k]) / (h * h);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("Poincare eigensolve did not converge");
  const double gap = solver.eigenvalues()[1];
  if (!(gap > 0.0) || !std::isfinite(gap)) throw NumericError("Poincare gap is not positive");
  return gap;
}

PotentialConditions verify_potential_conditions(const Potential& potential, const ProbeBox& box,
                                                std::size_t n_probes, int threads) {
  const auto probes = generate_probes(box, n_probes);
  const Domain domain{&box};
  PotentialConditions out;
  out.N = potential.growth().N;
  out.gamma = potential.growth().gamma;
  out.c_hess = sup_over(
      [&](const Vector& x) { return potential.hessian(x).norm() / (1.0 + potential.gradient(x).norm()); }, probes,
      domain, threads);
  const double gamma = out.gamma;
  out.fitted_N = sup_over(
      [&](const Vector& x) { return potential.gradient(x).norm() / (1.0 + std::pow(x.norm(), gamma)); }, probes,
      domain, threads);
  const Witnessed neg_min = sup_over([&](const Vector& x) { return -potential.value(x); }, probes, domain, threads);
  out.min_value = {-neg_min.value, neg_min.witness};
  if (!std::isfinite(out.min_value.value))
    throw AssumptionFailure("potential is not bounded from below on the probes", "C1", to_std(neg_min.witness));
  if (out.fitted_N.value > out.N * (1.0 + 1e-9) + 1e-12) {
    throw AssumptionFailure("declared gradient growth N = " + std::to_string(out.N) + " violated at x = " +
                                vec_string(out.fitted_N.witness),
                            "gradient-growth", to_std(out.fitted_N.witness));
  }
  return out;
}

bool AssumptionReport::all_passed() const {
  return std::all_of(flags.begin(), flags.end(), [](const ConditionFlag& f) { return f.passed(); });
}

double default_x_halfwidth(const Potential& potential) {
  if (potential.dim() != 1) return 8.0;
  return std::clamp(8.0, potential.truncation_halfwidth(30.0), potential.truncation_halfwidth(45.0));
}

AssumptionReport build_assumption_report(const ModelSpec& model, const AssumptionOptions& options) {
  const int d = model.dim();
  AssumptionReport r;
  r.model = model.name();
  r.dim = d;
  r.sigma_box = ProbeBox::cube(d, options.sigma_halfwidth);
  r.potential_box = ProbeBox::cube(d, options.potential_halfwidth.value_or(default_x_halfwidth(model.potential())));
  r.n_probes = options.n_probes;

  auto fail = [&](const std::string& name, const Error& e, std::optional<Vector> witness = std::nullopt) {
    r.flags.push_back({name, "failed", e.what(), std::move(witness)});
  };
  auto witness_of = [](const std::vector<double>& w) -> std::optional<Vector> {
    if (w.empty()) return std::nullopt;
    return Vector(Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size())));
  };

  try {
    const Witnessed c = estimate_ellipticity(model.diffusion(), r.sigma_box, options.n_probes, options.threads);
    r.c_sigma = c.value;
    r.c_sigma_witness = c.witness;
    r.flags.push_back({"Sigma1", "verified", "uniform ellipticity on the probe box", c.witness});
  } catch (const EllipticityViolation& e) {
    fail("Sigma1", e, witness_of(e.point()));
  }

  r.flags.push_back({"Sigma2", "assumed",
                     "local Sobolev regularity of a_ij is not machine-checkable; assumed for analytic families",
                     std::nullopt});

  try {
    const SigmaConstants s = extract_sigma_constants(model.diffusion(), r.sigma_box, options.n_probes,
                                                     options.threads);
    r.M_sigma = s.M_sigma.value;
    r.B_sigma = s.B_sigma.value;
    r.regime = s.regime;
    r.beta = s.beta;
    r.M_growth = s.M;
    r.fitted_M = s.fitted_M;
    r.flags.push_back({to_string(s.regime), "verified", "declared derivative growth holds on the probes",
                       std::nullopt});
  } catch (const AssumptionFailure& e) {
    const GrowthBound& g = model.diffusion().growth();
    r.regime = g.regime;
    r.beta = g.beta;
    r.M_growth = g.M;
    fail(e.condition(), e, witness_of(e.witness()));
  }
  r.N_sigma = compute_N_sigma(r.M_sigma, r.B_sigma, r.M_growth, r.regime, d);

  try {
    r.b_bound = verify_b_bound(model.diffusion(), r.N_sigma, options.quadrature_order);
    r.flags.push_back({"b-bound", "verified", "L2(nu) drift-correction bound by Gauss-Hermite quadrature",
                       std::nullopt});
  } catch (const AssumptionFailure& e) {
    fail("b-bound", e);
  }

  if (options.lambda_override) {
    r.lambda_poincare = *options.lambda_override;
    r.lambda_method = "override";
  } else if (model.poincare_constant()) {
    r.lambda_poincare = *model.poincare_constant();
    r.lambda_method = "analytic";
  } else if (d == 1) {
    try {
      r.lambda_poincare = estimate_poincare(model.potential(), options.poincare);
      r.lambda_method = "eigensolve";
    } catch (const NumericError& e) {
      fail("C2", e);
    }
  } else {
    r.flags.push_back({"C2", "failed", "Poincare constant must be supplied for d > 1", std::nullopt});
  }
  if (r.lambda_poincare > 0.0)
    r.flags.push_back({"C2", "verified", "Poincare constant " + r.lambda_method, std::nullopt});

  try {
    const PotentialConditions p =
        verify_potential_conditions(model.potential(), r.potential_box, options.n_probes, options.threads);
    r.c_hess = p.c_hess.value;
    r.N_gradgrowth = p.N;
    r.gamma = p.gamma;
    r.flags.push_back({"C1", "verified", "bounded from below on the probes", p.min_value.witness});
    r.flags.push_back({"C3", "verified", "Hessian bound constant from probes", p.c_hess.witness});
    r.flags.push_back({"gradient-growth", "verified", "declared |grad Phi| growth holds on the probes",
                       std::nullopt});
  } catch (const AssumptionFailure& e) {
    r.N_gradgrowth = model.potential().growth().N;
    r.gamma = model.potential().growth().gamma;
    fail(e.condition(), e, witness_of(e.witness()));
  }

  if (r.beta > -1.0) {
    const double limit = 2.0 / (1.0 + r.beta);
    if (r.gamma < limit) {
      r.flags.push_back({"gamma-beta", "verified",
                         "gamma = " + std::to_string(r.gamma) + " < 2/(1+beta) = " + std::to_string(limit),
                         std::nullopt});
    } else {
      r.flags.push_back({"gamma-beta", "failed",
                         "gamma = " + std::to_string(r.gamma) + " >= 2/(1+beta) = " + std::to_string(limit),
                         std::nullopt});
    }
  }
  return r;
}

}  // namespace hypocert
