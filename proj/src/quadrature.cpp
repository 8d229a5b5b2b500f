#include "hypocert/quadrature.hpp"

#include "hypocert/errors.hpp"

#include <cmath>
#include <vector>

namespace hypocert {

GaussHermiteRule gauss_hermite(int order) {
  if (order < 1) throw UsageError("Gauss-Hermite order must be positive");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(order);
  Eigen::VectorXd sub(order > 1 ? order - 1 : 0);
  for (int k = 1; k < order; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw NumericError("Gauss-Hermite eigensolve failed");
  GaussHermiteRule rule{solver.eigenvalues(), Eigen::VectorXd(order)};
  for (int k = 0; k < order; ++k) {
    const double c = solver.eigenvectors()(0, k);
    rule.weights[k] = c * c;
  }
  rule.weights /= rule.weights.sum();
  return rule;
}

double integrate_gaussian(int dim, const GaussHermiteRule& rule,
                          const std::function<double(std::span<const double>)>& f) {
  const int n = static_cast<int>(rule.nodes.size());
  std::vector<int> index(dim, 0);
  std::vector<double> point(dim);
  double total = 0.0;
  while (true) {
    double w = 1.0;
    for (int k = 0; k < dim; ++k) {
      point[k] = rule.nodes[index[k]];
      w *= rule.weights[index[k]];
    }
    total += w * f(point);
    int k = 0;
    while (k < dim && ++index[k] == n) index[k++] = 0;
    if (k == dim) break;
  }
  return total;
}

}  // namespace hypocert
