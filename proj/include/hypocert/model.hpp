#pragma once

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hypocert {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Which growth hypothesis the derivatives of Σ are declared to satisfy.
///   Sigma3:      |∂ₖaᵢⱼ(v)| ≤ M (1+|v|)^β,        β ≤ 0
///   Sigma3Prime: |∂ₖaᵢⱼ(v)| ≤ M (1_{B₁}(v)+|v|^β), 0 < β < 1
enum class GrowthRegime { Sigma3, Sigma3Prime };

std::string to_string(GrowthRegime regime);

struct GrowthBound {
  double beta = 0.0;
  double M = 0.0;
  GrowthRegime regime = GrowthRegime::Sigma3;
};

/// Declared growth |∇Φ(x)| ≤ N (1 + |x|^γ).
struct GradientGrowth {
  double N = 1.0;
  double gamma = 1.0;
};

/// Velocity-dependent diffusion matrix Σ(v) = (aᵢⱼ(v)).
///
/// The callbacks write into caller-provided buffers so the SDE hot loop does
/// not allocate. `eval` writes Σ(v) row-major (d·d entries); `grad` writes
/// ∂ₖaᵢⱼ(v) at index (k·d + i)·d + j. A missing `grad` falls back to central
/// differences with step 1e-5·(1+|v|).
class DiffusionField {
 public:
  using EvalFn = std::function<void(std::span<const double>, std::span<double>)>;
  using GradFn = std::function<void(std::span<const double>, std::span<double>)>;

  DiffusionField(int dim, EvalFn eval, GradFn grad, GrowthBound growth);

  int dim() const { return dim_; }
  const GrowthBound& growth() const { return growth_; }
  bool has_analytic_gradient() const { return static_cast<bool>(grad_); }

  /// Σ(v), checked for finiteness and symmetry (1e-12 relative).
  Matrix matrix(const Vector& v) const;

  /// result[k](i, j) = ∂ₖaᵢⱼ(v); analytic when available.
  std::vector<Matrix> gradient(const Vector& v) const;

  /// Same as gradient() but always by central differences.
  std::vector<Matrix> fd_gradient(const Vector& v) const;

  // Unchecked evaluation for inner loops.
  void eval_into(std::span<const double> v, std::span<double> out) const;
  void grad_into(std::span<const double> v, std::span<double> out) const;

 private:
  void fd_grad_into(std::span<const double> v, std::span<double> out) const;

  int dim_;
  EvalFn eval_;
  GradFn grad_;
  GrowthBound growth_;
};

/// Confining potential Φ with e^{−Φ} a probability density.
///
/// Built from an unnormalized shape; Φ = shape + log Z. Z is analytic when
/// supplied, otherwise (d = 1 only) it is integrated once by adaptive
/// Gauss–Kronrod quadrature over the truncation interval.
class Potential {
 public:
  using ValueFn = std::function<double(std::span<const double>)>;
  using VectorFn = std::function<void(std::span<const double>, std::span<double>)>;

  Potential(int dim, ValueFn shape, VectorFn grad, VectorFn hess,
            std::optional<double> log_normalizer, GradientGrowth growth);

  int dim() const { return dim_; }
  const GradientGrowth& growth() const { return growth_; }
  double log_normalizer() const { return log_normalizer_; }
  bool normalization_is_analytic() const { return normalization_analytic_; }
  bool has_analytic_gradient() const { return static_cast<bool>(grad_); }
  bool has_analytic_hessian() const { return static_cast<bool>(hess_); }

  double value(std::span<const double> x) const;
  double value(const Vector& x) const;
  Vector gradient(const Vector& x) const;
  Matrix hessian(const Vector& x) const;
  Vector fd_gradient(const Vector& x) const;
  Matrix fd_hessian(const Vector& x) const;

  void grad_into(std::span<const double> x, std::span<double> out) const;

  /// Symmetric interval [−L, L] (d = 1) outside of which Φ exceeds its
  /// minimum by at least `rise`.
  double truncation_halfwidth(double rise) const;

 private:
  double shape(std::span<const double> x) const;

  int dim_;
  ValueFn shape_;
  VectorFn grad_;
  VectorFn hess_;
  double log_normalizer_ = 0.0;
  bool normalization_analytic_ = false;
  GradientGrowth growth_;
};

/// A full problem instance.
class ModelSpec {
 public:
  ModelSpec(std::string name, DiffusionField diffusion, Potential potential,
            std::map<std::string, double> parameters = {},
            std::optional<double> poincare_constant = std::nullopt);

  const std::string& name() const { return name_; }
  int dim() const { return diffusion_.dim(); }
  const DiffusionField& diffusion() const { return diffusion_; }
  const Potential& potential() const { return potential_; }
  const std::map<std::string, double>& parameters() const { return parameters_; }
  /// Known closed-form Poincaré constant of e^{−Φ}dx, if any.
  const std::optional<double>& poincare_constant() const { return poincare_; }

 private:
  std::string name_;
  DiffusionField diffusion_;
  Potential potential_;
  std::map<std::string, double> parameters_;
  std::optional<double> poincare_;
};

/// bᵢ(v) = Σⱼ (∂ⱼaᵢⱼ(v) − aᵢⱼ(v) vⱼ).
Vector drift_correction(const DiffusionField& field, const Vector& v);

/// Lower-triangular σ(v) with σσᵀ = Σ(v).
Matrix cholesky_sigma(const DiffusionField& field, const Vector& v);

/// Named families; `params` overrides the family defaults.
ModelSpec make_model(const std::string& name, const std::map<std::string, double>& params = {});

std::vector<std::string> model_names();

/// classic, bounded-bump, double-well and aniso-2d at default parameters.
std::vector<ModelSpec> builtin_models();

}  // namespace hypocert
