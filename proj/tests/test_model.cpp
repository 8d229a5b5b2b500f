#include "hypocert/errors.hpp"
#include "hypocert/model.hpp"
#include "hypocert/philox.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace hypocert;

namespace {

DiffusionField constant_field(double a) {
  return DiffusionField(
      1, [a](std::span<const double>, std::span<double> out) { out[0] = a; },
      [](std::span<const double>, std::span<double> out) { out[0] = 0.0; }, GrowthBound{});
}

Vector vec1(double v) { return Vector::Constant(1, v); }

}  // namespace

TEST_CASE("drift correction on scalar fields") {
  CHECK(drift_correction(constant_field(1.0), vec1(2.0))[0] == doctest::Approx(-2.0).epsilon(1e-14));
  CHECK(drift_correction(constant_field(2.0), vec1(-1.0))[0] == doctest::Approx(2.0).epsilon(1e-14));
  const ModelSpec bump = make_model("bounded-bump");
  CHECK(drift_correction(bump.diffusion(), vec1(1.0))[0] == doctest::Approx(-3.0).epsilon(1e-14));
}

TEST_CASE("drift correction agrees with finite differences on every built-in") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (const auto& model : builtin_models()) {
    const int d = model.dim();
    for (int k = 0; k < 100; ++k) {
      Vector v(d);
      for (int i = 0; i < d; ++i) v[i] = normal(rng);
      const Vector b = drift_correction(model.diffusion(), v);
      const auto fd = model.diffusion().fd_gradient(v);
      const Matrix a = model.diffusion().matrix(v);
      for (int i = 0; i < d; ++i) {
        double expected = 0.0;
        for (int j = 0; j < d; ++j) expected += fd[j](i, j) - a(i, j) * v[j];
        CHECK(std::abs(b[i] - expected) <= 1e-6 * std::max(1.0, std::abs(expected)));
      }
    }
  }
}

TEST_CASE("non-finite coefficients name the entry") {
  DiffusionField bad(
      1, [](std::span<const double> v, std::span<double> out) { out[0] = v[0] > 0 ? NAN : 1.0; }, nullptr,
      GrowthBound{});
  CHECK_THROWS_AS(bad.matrix(vec1(1.0)), EvaluationError);
  try {
    bad.matrix(vec1(1.0));
  } catch (const EvaluationError& e) {
    CHECK(e.entry() == "a[0][0]");
  }
}

TEST_CASE("cholesky factors") {
  CHECK(cholesky_sigma(constant_field(4.0), vec1(0.3))(0, 0) == doctest::Approx(2.0).epsilon(1e-15));

  DiffusionField identity(
      2,
      [](std::span<const double>, std::span<double> out) {
        out[0] = 1.0;
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = 1.0;
      },
      nullptr, GrowthBound{});
  CHECK((cholesky_sigma(identity, Vector::Zero(2)) - Matrix::Identity(2, 2)).norm() < 1e-15);

  const ModelSpec aniso = make_model("aniso-2d");
  const Matrix s = cholesky_sigma(aniso.diffusion(), Vector::Zero(2));
  CHECK(s(0, 0) == doctest::Approx(1.41421356).epsilon(1e-8));
  CHECK(s(0, 1) == 0.0);
  CHECK(s(1, 0) == doctest::Approx(0.70710678).epsilon(1e-8));
  CHECK(s(1, 1) == doctest::Approx(1.22474487).epsilon(1e-8));
  const Matrix a = aniso.diffusion().matrix(Vector::Zero(2));
  CHECK((s * s.transpose() - a).norm() <= 1e-10 * a.norm());
}

TEST_CASE("cholesky reports the failing pivot") {
  DiffusionField indefinite(
      2,
      [](std::span<const double>, std::span<double> out) {
        out[0] = 1.0;
        out[1] = 2.0;
        out[2] = 2.0;
        out[3] = 1.0;
      },
      nullptr, GrowthBound{});
  try {
    cholesky_sigma(indefinite, Vector::Constant(2, 0.5));
    FAIL("expected an ellipticity violation");
  } catch (const EllipticityViolation& e) {
    CHECK(e.pivot() == 1);
    CHECK(e.point().size() == 2);
  }
}

TEST_CASE("built-in models") {
  const auto models = builtin_models();
  REQUIRE(models.size() >= 4);
  const ModelSpec classic = make_model("classic");
  for (double x : {-2.0, 0.0, 1.5})
    CHECK(std::exp(-classic.potential().value(vec1(x))) ==
          doctest::Approx(std::exp(-x * x / 2) / std::sqrt(2 * std::numbers::pi)).epsilon(1e-14));
  // dV drift at (x, v) = (0, 1)
  CHECK(drift_correction(classic.diffusion(), vec1(1.0))[0] - classic.potential().gradient(vec1(0.0))[0] ==
        doctest::Approx(-1.0));
  const ModelSpec bump = make_model("bounded-bump");
  CHECK(bump.diffusion().matrix(vec1(0.0))(0, 0) == doctest::Approx(3.0));
  for (const auto& m : models) {
    CHECK(m.dim() == m.diffusion().dim());
    CHECK(m.dim() == m.potential().dim());
  }
  CHECK_THROWS_AS(make_model("nope"), UsageError);
  CHECK_THROWS_AS(make_model("classic", {{"barrier", 2.0}}), UsageError);
}

TEST_CASE("double-well normalisation is numeric and gives a probability density") {
  const ModelSpec dw = make_model("double-well");
  CHECK_FALSE(dw.potential().normalization_is_analytic());
  double mass = 0.0;
  const double h = 1e-3;
  for (double x = -4.0; x <= 4.0; x += h) mass += std::exp(-dw.potential().value(vec1(x))) * h;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("potential derivatives agree with finite differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (const auto& m : builtin_models()) {
    for (int k = 0; k < 20; ++k) {
      Vector x(m.dim());
      for (int i = 0; i < m.dim(); ++i) x[i] = unif(rng);
      const Vector g = m.potential().gradient(x);
      CHECK((g - m.potential().fd_gradient(x)).norm() <= 1e-6 * (1.0 + g.norm()));
      const Matrix H = m.potential().hessian(x);
      CHECK((H - m.potential().fd_hessian(x)).norm() <= 1e-4 * (1.0 + H.norm()));
    }
  }
}

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using C = Philox4x32::Counter;
  CHECK(Philox4x32::generate(C{0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(Philox4x32::generate(C{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
        C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(Philox4x32::generate(C{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
        C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}
