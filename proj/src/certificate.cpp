#include "hypocert/certificate.hpp"

#include "hypocert/errors.hpp"

#include <cmath>
#include <sstream>

namespace hypocert {

namespace {

bool close(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)); }

}  // namespace

double r_phi(double N_sigma, double lambda, double c_phi, int dim) {
  const double u = 1.0 + c_phi + std::sqrt(2.0 * dim * dim * dim) * N_sigma;
  return u * (1.0 + (1.0 + lambda) / (2.0 * lambda) * u);
}

RateCertificate certify(const CertificateInputs& in) {
  if (!(in.c_sigma > 0.0)) throw UsageError("certify: c_sigma must be positive");
  if (!(in.N_sigma > 0.0)) throw UsageError("certify: N_sigma must be positive");
  if (!(in.lambda > 0.0)) throw UsageError("certify: lambda must be positive");
  if (!(in.c_phi >= 0.0)) throw UsageError("certify: c_phi must be nonnegative");
  if (in.dim < 1) throw UsageError("certify: dimension must be positive");
  if (!(in.theta1 > 1.0) || !std::isfinite(in.theta1)) throw UsageError("certify: theta1 must be > 1");

  RateCertificate c;
  c.inputs = in;
  const double q = std::sqrt(2.0 * in.dim * in.dim * in.dim);
  const double k = (1.0 + in.lambda) / (2.0 * in.lambda);
  const double u = 1.0 + in.c_phi;
  const double N = in.N_sigma;

  c.d_sigma = q * N;
  c.delta = in.lambda / (1.0 + in.lambda) / (1.0 + in.c_phi + c.d_sigma);
  c.s_phi = in.lambda / (2.0 * (1.0 + in.lambda));
  c.r_phi = r_phi(N, in.lambda, in.c_phi, in.dim);

  // r_Φ(N) + s_Φ expanded in powers of N.
  c.a1 = c.s_phi + u * (1.0 + k * u);
  c.a2 = q * (1.0 + 2.0 * k * u);
  c.a3 = k * q * q;
  c.n1 = 2.0 * c.a1 / c.s_phi;
  c.n2 = 2.0 * c.a2 / c.s_phi;
  c.n3 = 2.0 * c.a3 / c.s_phi;

  const double poly = c.a1 + c.a2 * N + c.a3 * N * N;
  c.eps_tilde = N / poly;
  const double v = in.theta1 - 1.0;
  c.eps = v / (1.0 + v) * (in.c_sigma / N) * c.eps_tilde;
  c.kappa = c.eps * c.s_phi;
  c.kappa1 = std::sqrt((1.0 + c.eps) / (1.0 - c.eps));
  c.kappa2 = c.kappa / (1.0 + c.eps);
  c.theta2 = 0.5 * c.kappa;

  if (!(c.eps > 0.0 && c.eps < 1.0)) {
    std::ostringstream os;
    os << "certificate: eps = " << c.eps << " is outside (0, 1)";
    throw CertificateInconsistency(os.str());
  }
  if (!close(c.r_phi + c.s_phi, poly, 1e-12))
    throw CertificateInconsistency("certificate: polynomial split of r_phi + s_phi does not match");
  const double closed_form = (in.theta1 - 1.0) / in.theta1 * in.c_sigma / (c.n1 + c.n2 * N + c.n3 * N * N);
  if (!close(closed_form, c.theta2, 1e-12))
    throw CertificateInconsistency("certificate: the two expressions for theta2 disagree");
  if (c.kappa1 > in.theta1 * (1.0 + 1e-12))
    throw CertificateInconsistency("certificate: kappa1 exceeds theta1");
  return c;
}

RateCondition check_rate_condition(const RateCertificate& c, double lambda_m, double lambda_M) {
  RateCondition out;
  out.lambda_m = lambda_m;
  out.lambda_M = lambda_M;
  const double spread = 1.0 + c.d_sigma + c.inputs.c_phi;
  out.left_coefficient = lambda_m - c.eps * spread * (1.0 + 1.0 / (2.0 * c.delta));
  out.right_coefficient = c.eps * (lambda_M / (1.0 + lambda_M) - spread * c.delta / 2.0);
  out.left_margin = out.left_coefficient - c.kappa;
  out.right_margin = out.right_coefficient - c.kappa;
  const double tol = 1e-12 * c.kappa;
  out.satisfied = out.left_margin >= -tol && out.right_margin >= -tol;
  if (!out.satisfied) {
    std::ostringstream os;
    os << "rate condition violated: margins " << out.left_margin << ", " << out.right_margin;
    throw CertificateInconsistency(os.str());
  }
  return out;
}

}  // namespace hypocert
