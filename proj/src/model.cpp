#include "hypocert/model.hpp"

#include "hypocert/errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace hypocert {

namespace {

double fd_step(double t) { return 1e-5 * (1.0 + std::abs(t)); }

std::string entry_name(int i, int j) {
  std::ostringstream os;
  os << "a[" << i << "][" << j << "]";
  return os.str();
}

std::string point_string(std::span<const double> v) {
  std::ostringstream os;
  os << "(";
  for (std::size_t k = 0; k < v.size(); ++k) os << (k ? ", " : "") << v[k];
  os << ")";
  return os.str();
}

}  // namespace

std::string to_string(GrowthRegime regime) {
  return regime == GrowthRegime::Sigma3 ? "Sigma3" : "Sigma3'";
}

// ---------------------------------------------------------------------------
// DiffusionField

DiffusionField::DiffusionField(int dim, EvalFn eval, GradFn grad, GrowthBound growth)
    : dim_(dim), eval_(std::move(eval)), grad_(std::move(grad)), growth_(growth) {
  if (dim_ < 1) throw UsageError("diffusion field dimension must be positive");
  if (!eval_) throw UsageError("diffusion field needs an evaluation callback");
}

void DiffusionField::eval_into(std::span<const double> v, std::span<double> out) const {
  eval_(v, out);
}

void DiffusionField::grad_into(std::span<const double> v, std::span<double> out) const {
  if (grad_) {
    grad_(v, out);
  } else {
    fd_grad_into(v, out);
  }
}

void DiffusionField::fd_grad_into(std::span<const double> v, std::span<double> out) const {
  const std::size_t d = dim_;
  std::vector<double> probe(v.begin(), v.end());
  std::vector<double> plus(d * d), minus(d * d);
  for (std::size_t k = 0; k < d; ++k) {
    const double h = fd_step(v[k]);
    probe[k] = v[k] + h;
    eval_(probe, plus);
    probe[k] = v[k] - h;
    eval_(probe, minus);
    probe[k] = v[k];
    for (std::size_t e = 0; e < d * d; ++e) out[k * d * d + e] = (plus[e] - minus[e]) / (2.0 * h);
  }
}

Matrix DiffusionField::matrix(const Vector& v) const {
  const int d = dim_;
  std::vector<double> buf(d * d);
  eval_(std::span<const double>(v.data(), d), buf);
  Matrix a(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const double x = buf[i * d + j];
      if (!std::isfinite(x)) {
        throw EvaluationError("non-finite diffusion coefficient " + entry_name(i, j) + " at v = " +
                                  point_string(std::span<const double>(v.data(), d)),
                              entry_name(i, j));
      }
      a(i, j) = x;
    }
  }
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const double scale = std::max({std::abs(a(i, j)), std::abs(a(j, i)), 1e-300});
      if (std::abs(a(i, j) - a(j, i)) > 1e-12 * scale) {
        throw EvaluationError("diffusion matrix not symmetric in " + entry_name(i, j), entry_name(i, j));
      }
    }
  }
  return a;
}

std::vector<Matrix> DiffusionField::gradient(const Vector& v) const {
  const int d = dim_;
  std::vector<double> buf(d * d * d);
  grad_into(std::span<const double>(v.data(), d), buf);
  std::vector<Matrix> out(d, Matrix(d, d));
  for (int k = 0; k < d; ++k) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        const double x = buf[(k * d + i) * d + j];
        if (!std::isfinite(x)) {
          const std::string name = "d" + std::to_string(k) + " " + entry_name(i, j);
          throw EvaluationError("non-finite diffusion derivative " + name, name);
        }
        out[k](i, j) = x;
      }
    }
  }
  return out;
}

std::vector<Matrix> DiffusionField::fd_gradient(const Vector& v) const {
  const int d = dim_;
  std::vector<double> buf(d * d * d);
  fd_grad_into(std::span<const double>(v.data(), d), buf);
  std::vector<Matrix> out(d, Matrix(d, d));
  for (int k = 0; k < d; ++k)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) out[k](i, j) = buf[(k * d + i) * d + j];
  return out;
}

// ---------------------------------------------------------------------------
// Potential

Potential::Potential(int dim, ValueFn shape, VectorFn grad, VectorFn hess,
                     std::optional<double> log_normalizer, GradientGrowth growth)
    : dim_(dim), shape_(std::move(shape)), grad_(std::move(grad)), hess_(std::move(hess)), growth_(growth) {
  if (dim_ < 1) throw UsageError("potential dimension must be positive");
  if (!shape_) throw UsageError("potential needs a value callback");
  if (log_normalizer) {
    log_normalizer_ = *log_normalizer;
    normalization_analytic_ = true;
    return;
  }
  if (dim_ != 1) throw UsageError("numeric normalization is only available in one dimension");

  const double half = truncation_halfwidth(45.0);
  double shift = shape_(std::span<const double>(&half, 1));
  for (int k = 0; k <= 4000; ++k) {
    const double x = -half + 2.0 * half * k / 4000.0;
    shift = std::min(shift, shape_(std::span<const double>(&x, 1)));
  }
  auto density = [&](double x) { return std::exp(-(shape_(std::span<const double>(&x, 1)) - shift)); };
  double error = 0.0;
  const double mass =
      boost::math::quadrature::gauss_kronrod<double, 61>::integrate(density, -half, half, 15, 1e-14, &error);
  if (!(mass > 0.0) || !std::isfinite(mass)) throw NumericError("potential mass is not finite and positive");
  log_normalizer_ = std::log(mass) - shift;
}

double Potential::shape(std::span<const double> x) const { return shape_(x); }

double Potential::value(std::span<const double> x) const {
  const double phi = shape_(x) + log_normalizer_;
  if (!std::isfinite(phi)) throw EvaluationError("non-finite potential at x = " + point_string(x), "Phi");
  return phi;
}

double Potential::value(const Vector& x) const {
  return value(std::span<const double>(x.data(), x.size()));
}

void Potential::grad_into(std::span<const double> x, std::span<double> out) const {
  if (grad_) {
    grad_(x, out);
    return;
  }
  std::vector<double> probe(x.begin(), x.end());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double h = fd_step(x[k]);
    probe[k] = x[k] + h;
    const double fp = shape_(probe);
    probe[k] = x[k] - h;
    const double fm = shape_(probe);
    probe[k] = x[k];
    out[k] = (fp - fm) / (2.0 * h);
  }
}

Vector Potential::gradient(const Vector& x) const {
  Vector g(dim_);
  grad_into(std::span<const double>(x.data(), dim_), std::span<double>(g.data(), dim_));
  for (int k = 0; k < dim_; ++k) {
    if (!std::isfinite(g[k])) throw EvaluationError("non-finite potential gradient", "dPhi/dx" + std::to_string(k));
  }
  return g;
}

Vector Potential::fd_gradient(const Vector& x) const {
  Vector g(dim_);
  Vector probe = x;
  for (int k = 0; k < dim_; ++k) {
    const double h = fd_step(x[k]);
    probe[k] = x[k] + h;
    const double fp = value(probe);
    probe[k] = x[k] - h;
    const double fm = value(probe);
    probe[k] = x[k];
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Matrix Potential::hessian(const Vector& x) const {
  if (!hess_) return fd_hessian(x);
  Matrix h(dim_, dim_);
  std::vector<double> buf(dim_ * dim_);
  hess_(std::span<const double>(x.data(), dim_), buf);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) h(i, j) = buf[i * dim_ + j];
  return h;
}

Matrix Potential::fd_hessian(const Vector& x) const {
  Matrix h(dim_, dim_);
  Vector probe = x;
  for (int k = 0; k < dim_; ++k) {
    const double step = fd_step(x[k]);
    probe[k] = x[k] + step;
    const Vector gp = gradient(probe);
    probe[k] = x[k] - step;
    const Vector gm = gradient(probe);
    probe[k] = x[k];
    h.col(k) = (gp - gm) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

double Potential::truncation_halfwidth(double rise) const {
  if (dim_ != 1) throw UsageError("truncation interval is defined for one-dimensional potentials");
  for (double half = 1.0; half <= 1e4; half *= 1.5) {
    double lo = shape_(std::span<const double>(&half, 1));
    for (int k = 0; k <= 2000; ++k) {
      const double x = -half + 2.0 * half * k / 2000.0;
      lo = std::min(lo, shape_(std::span<const double>(&x, 1)));
    }
    const double neg = -half;
    const double left = shape_(std::span<const double>(&neg, 1));
    const double right = shape_(std::span<const double>(&half, 1));
    if (left - lo >= rise && right - lo >= rise) {
      // Shrink to the first point where the rise is reached on both sides.
      double edge = half;
      for (int k = 0; k <= 20000; ++k) {
        const double x = half * k / 20000.0;
        const double mx = -x;
        if (shape_(std::span<const double>(&x, 1)) - lo >= rise &&
            shape_(std::span<const double>(&mx, 1)) - lo >= rise) {
          edge = x;
          break;
        }
      }
      return edge;
    }
  }
  throw NumericError("potential does not grow enough to define a truncation interval");
}

// ---------------------------------------------------------------------------
// ModelSpec

ModelSpec::ModelSpec(std::string name, DiffusionField diffusion, Potential potential,
                     std::map<std::string, double> parameters, std::optional<double> poincare_constant)
    : name_(std::move(name)),
      diffusion_(std::move(diffusion)),
      potential_(std::move(potential)),
      parameters_(std::move(parameters)),
      poincare_(poincare_constant) {
  if (diffusion_.dim() != potential_.dim()) {
    throw UsageError("model '" + name_ + "': diffusion and potential dimensions differ");
  }
}

// ---------------------------------------------------------------------------
// Operations

Vector drift_correction(const DiffusionField& field, const Vector& v) {
  const int d = field.dim();
  for (int k = 0; k < d; ++k) {
    if (!std::isfinite(v[k])) throw UsageError("drift_correction: non-finite velocity");
  }
  const Matrix a = field.matrix(v);
  const std::vector<Matrix> da = field.gradient(v);
  Vector b(d);
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += da[j](i, j) - a(i, j) * v[j];
    b[i] = s;
  }
  return b;
}

Matrix cholesky_sigma(const DiffusionField& field, const Vector& v) {
  const Matrix a = field.matrix(v);
  const int d = field.dim();
  Matrix l = Matrix::Zero(d, d);
  for (int j = 0; j < d; ++j) {
    double pivot = a(j, j);
    for (int k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > 0.0)) {
      std::ostringstream os;
      os << "Sigma(v) is not positive definite at v = "
         << point_string(std::span<const double>(v.data(), d)) << " (pivot " << j << ")";
      throw EllipticityViolation(os.str(), std::vector<double>(v.data(), v.data() + d), j);
    }
    l(j, j) = std::sqrt(pivot);
    for (int i = j + 1; i < d; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

namespace {

double param(const std::map<std::string, double>& params, const std::string& key, double fallback) {
  const auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

void require_known(const std::string& model, const std::map<std::string, double>& params,
                   std::initializer_list<const char*> known) {
  for (const auto& [key, value] : params) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw UsageError("model '" + model + "' has no parameter '" + key + "'");
    if (!std::isfinite(value)) throw UsageError("model '" + model + "': parameter '" + key + "' is not finite");
  }
}

DiffusionField constant_scalar_field(double a, GrowthBound growth) {
  return DiffusionField(
      1, [a](std::span<const double>, std::span<double> out) { out[0] = a; },
      [](std::span<const double>, std::span<double> out) { out[0] = 0.0; }, growth);
}

Potential quadratic_potential(double variance) {
  // Φ(x) = x²/(2s²) + ½ log(2π s²)
  const double inv = 1.0 / variance;
  return Potential(
      1, [inv](std::span<const double> x) { return 0.5 * inv * x[0] * x[0]; },
      [inv](std::span<const double> x, std::span<double> g) { g[0] = inv * x[0]; },
      [inv](std::span<const double>, std::span<double> h) { h[0] = inv; },
      0.5 * std::log(2.0 * std::numbers::pi * variance), GradientGrowth{inv, 1.0});
}

ModelSpec gaussian_family(const std::string& name, double variance, double diffusion,
                          std::map<std::string, double> params) {
  if (!(variance > 0.0)) throw UsageError("model '" + name + "': variance must be positive");
  if (!(diffusion > 0.0)) throw UsageError("model '" + name + "': diffusion must be positive");
  return ModelSpec(name, constant_scalar_field(diffusion, GrowthBound{0.0, 0.0, GrowthRegime::Sigma3}),
                   quadratic_potential(variance), std::move(params), 1.0 / variance);
}

}  // namespace

std::vector<std::string> model_names() {
  return {"classic", "bounded-bump", "double-well", "aniso-2d", "gaussian"};
}

ModelSpec make_model(const std::string& name, const std::map<std::string, double>& params) {
  if (name == "classic") {
    require_known(name, params, {});
    return gaussian_family(name, 1.0, 1.0, {});
  }
  if (name == "gaussian") {
    require_known(name, params, {"variance", "diffusion"});
    const double variance = param(params, "variance", 1.0);
    const double diffusion = param(params, "diffusion", 1.0);
    return gaussian_family(name, variance, diffusion, {{"variance", variance}, {"diffusion", diffusion}});
  }
  if (name == "bounded-bump") {
    require_known(name, params, {});
    // a(v) = 2 + 1/(1+v²); |a'| is maximal at v = 1/√3 with value 9/(8√3).
    const double bound = 9.0 / (8.0 * std::sqrt(3.0));
    DiffusionField field(
        1,
        [](std::span<const double> v, std::span<double> out) { out[0] = 2.0 + 1.0 / (1.0 + v[0] * v[0]); },
        [](std::span<const double> v, std::span<double> out) {
          const double q = 1.0 + v[0] * v[0];
          out[0] = -2.0 * v[0] / (q * q);
        },
        GrowthBound{0.0, bound, GrowthRegime::Sigma3});
    return ModelSpec(name, std::move(field), quadratic_potential(1.0), {}, 1.0);
  }
  if (name == "double-well") {
    require_known(name, params, {"barrier"});
    const double s = param(params, "barrier", 1.0);
    if (!(s > 0.0)) throw UsageError("model 'double-well': barrier must be positive");
    // Φ(x) = s (x²−1)² + log Z, Z by quadrature.
    Potential potential(
        1,
        [s](std::span<const double> x) {
          const double w = x[0] * x[0] - 1.0;
          return s * w * w;
        },
        [s](std::span<const double> x, std::span<double> g) { g[0] = 4.0 * s * x[0] * (x[0] * x[0] - 1.0); },
        [s](std::span<const double> x, std::span<double> h) { h[0] = s * (12.0 * x[0] * x[0] - 4.0); },
        std::nullopt, GradientGrowth{4.0 * s, 3.0});
    return ModelSpec(name, constant_scalar_field(1.0, GrowthBound{-0.5, 0.0, GrowthRegime::Sigma3}),
                     std::move(potential), {{"barrier", s}});
  }
  if (name == "aniso-2d") {
    require_known(name, params, {"a11", "a12", "a22"});
    const double a11 = param(params, "a11", 2.0);
    const double a12 = param(params, "a12", 1.0);
    const double a22 = param(params, "a22", 2.0);
    DiffusionField field(
        2,
        [a11, a12, a22](std::span<const double>, std::span<double> out) {
          out[0] = a11;
          out[1] = a12;
          out[2] = a12;
          out[3] = a22;
        },
        [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); },
        GrowthBound{0.0, 0.0, GrowthRegime::Sigma3});
    Potential potential(
        2, [](std::span<const double> x) { return 0.5 * (x[0] * x[0] + x[1] * x[1]); },
        [](std::span<const double> x, std::span<double> g) {
          g[0] = x[0];
          g[1] = x[1];
        },
        [](std::span<const double>, std::span<double> h) {
          h[0] = 1.0;
          h[1] = 0.0;
          h[2] = 0.0;
          h[3] = 1.0;
        },
        std::log(2.0 * std::numbers::pi), GradientGrowth{1.0, 1.0});
    return ModelSpec(name, std::move(field), std::move(potential), {{"a11", a11}, {"a12", a12}, {"a22", a22}},
                     1.0);
  }
  throw UsageError("unknown model '" + name + "'");
}

std::vector<ModelSpec> builtin_models() {
  std::vector<ModelSpec> out;
  for (const char* name : {"classic", "bounded-bump", "double-well", "aniso-2d"}) out.push_back(make_model(name));
  return out;
}

}  // namespace hypocert
