#pragma once

#include <string>

namespace hypocert {

struct CertificateInputs {
  double c_sigma = 1.0;  // ellipticity constant, plays the role of Λ_m
  double N_sigma = 1.0;
  double lambda = 1.0;  // Poincaré constant, plays the role of Λ_M
  double c_phi = 1.0;   // c₂, supplied by the caller
  int dim = 1;
  double theta1 = 2.0;
  std::string provenance;  // which report produced the constants
};

/// The full chain of constants behind the explicit rate θ₂.
struct RateCertificate {
  CertificateInputs inputs;
  double d_sigma = 0.0;  // √(2d³) N_Σ, the constant c₁
  double delta = 0.0;
  double s_phi = 0.0;
  double r_phi = 0.0;  // r_Φ(N_Σ)
  double a1 = 0.0, a2 = 0.0, a3 = 0.0;
  double n1 = 0.0, n2 = 0.0, n3 = 0.0;
  double eps_tilde = 0.0;
  double eps = 0.0;
  double kappa = 0.0;
  double kappa1 = 0.0;  // √((1+ε)/(1−ε))
  double kappa2 = 0.0;  // κ/(1+ε)
  double theta2 = 0.0;
};

/// r_Φ(N) = (1+c_Φ+√(2d³)N)(1 + (1+Λ)/(2Λ)(1+c_Φ+√(2d³)N)).
double r_phi(double N_sigma, double lambda, double c_phi, int dim);

/// Builds the certificate; throws UsageError on invalid inputs and
/// CertificateInconsistency if an internal identity fails.
RateCertificate certify(const CertificateInputs& inputs);

struct RateCondition {
  double lambda_m = 0.0;
  double lambda_M = 0.0;
  double left_coefficient = 0.0;   // Λ_m − ε(1+c₁+c₂)(1+1/(2δ))
  double right_coefficient = 0.0;  // ε(Λ_M/(1+Λ_M) − (1+c₁+c₂)δ/2)
  double left_margin = 0.0;        // left − κ
  double right_margin = 0.0;       // right − κ
  bool satisfied = false;
};

/// Verifies that κ is dominated by both coefficients of the abstract decay
/// inequality with c₁ = d_Σ and c₂ = c_Φ. The right margin is zero in exact
/// arithmetic for the chosen δ; margins below −1e-12·κ raise
/// CertificateInconsistency.
RateCondition check_rate_condition(const RateCertificate& certificate, double lambda_m, double lambda_M);

}  // namespace hypocert
