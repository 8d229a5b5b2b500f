#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>

namespace hypocert {

/// Gauss–Hermite rule for the standard normal density: ∫ f dν ≈ Σ wₖ f(xₖ).
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;  // sum to 1
};

/// Golub–Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
GaussHermiteRule gauss_hermite(int order);

/// ∫_{ℝᵈ} f dν_d by the tensor product of a one-dimensional rule.
double integrate_gaussian(int dim, const GaussHermiteRule& rule,
                          const std::function<double(std::span<const double>)>& f);

}  // namespace hypocert
