#include "hypocert/certificate.hpp"
#include "hypocert/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace hypocert;

namespace {

CertificateInputs unit_inputs() {
  CertificateInputs in;
  in.c_sigma = 1.0;
  in.N_sigma = 1.0;
  in.lambda = 1.0;
  in.c_phi = 0.0;
  in.dim = 1;
  in.theta1 = 2.0;
  return in;
}

// θ₂ from the closed form with the n-coefficients rebuilt from r_Φ by
// polynomial interpolation in N, independently of the library's expansion.
double theta2_closed_form(const CertificateInputs& in) {
  const double s = in.lambda / (2.0 * (1.0 + in.lambda));
  const double p0 = r_phi(0.0, in.lambda, in.c_phi, in.dim) + s;
  const double p1 = r_phi(1.0, in.lambda, in.c_phi, in.dim) + s;
  const double p2 = r_phi(2.0, in.lambda, in.c_phi, in.dim) + s;
  const double a3 = (p2 - 2.0 * p1 + p0) / 2.0;
  const double a2 = p1 - p0 - a3;
  const double a1 = p0;
  const double N = in.N_sigma;
  const double n = 2.0 * (a1 + a2 * N + a3 * N * N) / s;
  return (in.theta1 - 1.0) / in.theta1 * in.c_sigma / n;
}

}  // namespace

TEST_CASE("unit certificate") {
  const RateCertificate c = certify(unit_inputs());
  CHECK(c.a1 == doctest::Approx(2.25).epsilon(1e-12));
  CHECK(c.a2 == doctest::Approx(4.242640687).epsilon(1e-9));
  CHECK(c.a3 == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(c.n1 == doctest::Approx(18.0).epsilon(1e-12));
  CHECK(c.n2 == doctest::Approx(33.9411255).epsilon(1e-9));
  CHECK(c.n3 == doctest::Approx(16.0).epsilon(1e-12));
  CHECK(c.theta2 == doctest::Approx(0.00735931288).epsilon(1e-9));
  CHECK(c.d_sigma == doctest::Approx(std::sqrt(2.0)));
  CHECK(c.delta == doctest::Approx(0.5 / (1.0 + std::sqrt(2.0))));
  CHECK(c.s_phi == doctest::Approx(0.25));
}

TEST_CASE("certificate identities") {
  const RateCertificate c = certify(unit_inputs());
  CHECK(c.theta2 == doctest::Approx(c.kappa / 2.0).epsilon(1e-14));
  CHECK(c.kappa == doctest::Approx(c.eps * c.s_phi).epsilon(1e-14));
  CHECK(c.kappa1 == doctest::Approx(std::sqrt((1.0 + c.eps) / (1.0 - c.eps))).epsilon(1e-14));
  CHECK(c.kappa1 <= c.inputs.theta1);
  CHECK(c.eps > 0.0);
  CHECK(c.eps < 1.0);
}

TEST_CASE("polynomial split matches r_phi + s_phi at random N") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(0.01, 20.0);
  for (int d : {1, 2, 3}) {
    CertificateInputs in = unit_inputs();
    in.dim = d;
    in.c_phi = 0.7;
    in.lambda = 0.3;
    const RateCertificate c = certify(in);
    for (int k = 0; k < 10; ++k) {
      const double N = unif(rng);
      const double direct = r_phi(N, in.lambda, in.c_phi, d) + c.s_phi;
      CHECK(c.a1 + c.a2 * N + c.a3 * N * N == doctest::Approx(direct).epsilon(1e-12));
    }
  }
}

TEST_CASE("limits and scaling") {
  CertificateInputs in = unit_inputs();
  in.theta1 = 1.0 + 1e-9;
  CHECK(certify(in).theta2 < 1e-10);

  in = unit_inputs();
  const double base = certify(in).theta2;
  in.c_sigma = 2.0;
  CHECK(certify(in).theta2 == doctest::Approx(2.0 * base).epsilon(1e-15));
}

TEST_CASE("invalid inputs") {
  CertificateInputs in = unit_inputs();
  in.theta1 = 0.5;
  CHECK_THROWS_AS(certify(in), UsageError);
  in = unit_inputs();
  in.c_sigma = 0.0;
  CHECK_THROWS_AS(certify(in), UsageError);
  in = unit_inputs();
  in.c_phi = -1.0;
  CHECK_THROWS_AS(certify(in), UsageError);
}

TEST_CASE("5x5x5 lattice") {
  const double cs[] = {0.25, 0.5, 1.0, 2.0, 4.0};
  const double Ns[] = {0.5, 1.0, 2.0, 3.0, 6.0};
  const double ls[] = {0.1, 0.5, 1.0, 2.0, 10.0};
  int points = 0;
  for (double c_sigma : cs)
    for (double N : Ns)
      for (double lambda : ls) {
        CertificateInputs in = unit_inputs();
        in.c_sigma = c_sigma;
        in.N_sigma = N;
        in.lambda = lambda;
        in.c_phi = 0.5;
        in.theta1 = 3.0;
        const RateCertificate c = certify(in);
        ++points;
        CHECK(c.theta2 == doctest::Approx(theta2_closed_form(in)).epsilon(1e-12));
        CHECK(c.kappa == doctest::Approx(c.eps * c.s_phi).epsilon(1e-12));
        CHECK(c.eps_tilde > 0.0);
        CHECK(c.eps_tilde < 1.0);
        CHECK(c.kappa1 <= in.theta1);

        CertificateInputs more = in;
        more.N_sigma = N * 1.1;
        CHECK(certify(more).theta2 < c.theta2);
        more = in;
        more.c_phi += 0.5;
        CHECK(certify(more).theta2 < c.theta2);
        more = in;
        more.c_sigma *= 1.1;
        CHECK(certify(more).theta2 > c.theta2);
        more = in;
        more.theta1 += 0.5;
        CHECK(certify(more).theta2 > c.theta2);
      }
  CHECK(points == 125);
}

TEST_CASE("rate condition") {
  const RateCertificate c = certify(unit_inputs());
  const RateCondition rc = check_rate_condition(c, 1.0, 1.0);
  CHECK(rc.satisfied);
  CHECK(rc.left_margin > 0.0);
  // the paper's δ makes the right coefficient equal κ exactly
  CHECK(std::abs(rc.right_margin) <= 1e-12 * c.kappa);
  CHECK(rc.right_coefficient == doctest::Approx(c.kappa).epsilon(1e-12));
  // eps → 0: left coefficient → Λ_m
  RateCertificate zero = c;
  zero.eps = 0.0;
  zero.kappa = 0.0;
  CHECK(check_rate_condition(zero, 1.7, 1.0).left_coefficient == doctest::Approx(1.7));
  // a Λ_m below the certified κ is an inconsistency
  CHECK_THROWS_AS(check_rate_condition(c, 1e-6, 1.0), CertificateInconsistency);
}

TEST_CASE("kappa1 of the unit certificate") {
  const RateCertificate c = certify(unit_inputs());
  CHECK(c.eps == doctest::Approx(0.0588745).epsilon(1e-6));
  CHECK(c.kappa1 == doctest::Approx(1.0607144).epsilon(1e-7));
  CHECK(c.kappa1 <= 2.0);
}

TEST_CASE("c_phi = 1 classic certificate") {
  CertificateInputs in = unit_inputs();
  in.c_phi = 1.0;
  CHECK(certify(in).theta2 == doctest::Approx(0.0040794).epsilon(1e-4));
}
