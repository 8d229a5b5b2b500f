#pragma once

#include "hypocert/model.hpp"

#include <Eigen/Sparse>

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hypocert {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct PhaseBox {
  double x_min = -8.0;
  double x_max = 8.0;
  double v_min = -8.0;
  double v_max = 8.0;
};

/// Default truncation: v ∈ [−8, 8]; x ∈ [−L, L] with L = 8 clamped between
/// the points where Φ has risen 30 and 45 above its minimum.
PhaseBox default_box(const ModelSpec& model);

/// Uniform tensor grid on the truncated (x, v) phase space of a d = 1 model.
///
/// Node weights are e^{−Φ(x)}hx and ν-density·hv, each renormalised to sum to
/// one. Log densities (nodes and cell midpoints, same normalisation) are kept
/// so that operator coefficients only ever use density ratios.
struct PhaseGrid {
  int nx = 0;
  int nv = 0;
  double hx = 0.0;
  double hv = 0.0;
  PhaseBox box;
  Eigen::VectorXd x_nodes, v_nodes;
  Eigen::VectorXd x_weights, v_weights;
  Eigen::VectorXd x_log_density, x_mid_log_density;  // size nx, nx−1
  Eigen::VectorXd v_log_density, v_mid_log_density;  // size nv, nv−1

  std::size_t size() const { return static_cast<std::size_t>(nx) * nv; }
  Eigen::Index index(int i, int j) const { return static_cast<Eigen::Index>(i) * nv + j; }

  /// μ-weights W, x-major.
  Eigen::VectorXd weights() const;
  /// Normalised phase-space density ρ at the nodes (Lebesgue sense).
  Eigen::VectorXd density() const;

  double inner_product(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const;
  double norm(const Eigen::VectorXd& f) const;
  double mean(const Eigen::VectorXd& f) const;  // (f, 1)_μ

  /// H̃ inner product with weight 1/ρ.
  double fp_norm(const Eigen::VectorXd& u) const;
  /// Lebesgue mass Σ u hx hv.
  double mass(const Eigen::VectorXd& u) const;

  Eigen::VectorXd sample(const std::function<double(double, double)>& f) const;
};

PhaseGrid build_grid(const ModelSpec& model, int nx, int nv, const PhaseBox& box);

enum class OperatorKind { L, S, A, G, P, P_S, L_FP, L_star };

std::string to_string(OperatorKind kind);

/// op f = matrix·f − u (wᵀf); the rank-one part is only used by P.
struct DiscreteOperator {
  OperatorKind kind = OperatorKind::L;
  SparseMatrix matrix;
  Eigen::VectorXd rank_one_u;
  Eigen::VectorXd rank_one_w;
  int stencil_order = 2;

  Eigen::VectorXd apply(const Eigen::VectorXd& f) const;
  bool has_rank_one() const { return rank_one_u.size() > 0; }
};

/// Assembles one operator on the grid.
///
/// S is in flux form (1/q)∂ᵥ(q a ∂ᵥ f) with midpoint values of a and of the
/// Gaussian density q; A uses density-weighted central differences with
/// coefficients v, Φ′ replaced by their discrete counterparts, so that on the
/// grid S is exactly μ-symmetric, A exactly μ-antisymmetric and A1 = 0. The
/// truncation boundary is closed with zero flux. L_FP is an independent flux
/// form of the Fokker–Planck operator (geometric-mean midpoints).
DiscreteOperator assemble(const ModelSpec& model, const PhaseGrid& grid, OperatorKind kind, int threads = 1);

/// T·op·T⁻¹ with T multiplication by the grid density ρ.
SparseMatrix conjugate_by_density(const PhaseGrid& grid, const SparseMatrix& op);

/// Writes the sparse part in MatrixMarket coordinate format.
void export_triplets(const DiscreteOperator& op, const std::string& path);

// ---------------------------------------------------------------------------
// Test functions

/// χ(x)χ(v) Σ c_mn He_m(x) He_n(v) with c_mn ~ N(0,1)/(1+m+n)² and χ a
/// smooth bump supported strictly inside the box.
class SmoothTestFunction {
 public:
  enum class Shape { Full, XOnly, OddInV };

  static SmoothTestFunction random(std::uint64_t seed, const PhaseBox& box, Shape shape = Shape::Full,
                                   int degree = 4);

  double operator()(double x, double v) const;

 private:
  Eigen::MatrixXd coeff_;
  double x_center_ = 0.0, x_radius_ = 1.0;
  double v_center_ = 0.0, v_radius_ = 1.0;
  double x_shift_ = 0.0, v_shift_ = 0.0;  // origin of the Hermite factors
  bool cutoff_v_ = true;
};

std::vector<Eigen::VectorXd> random_test_vectors(const PhaseGrid& grid, std::size_t count, std::uint64_t seed,
                                                 SmoothTestFunction::Shape shape = SmoothTestFunction::Shape::Full);

// ---------------------------------------------------------------------------
// Operator-level inequality tests

struct InequalityResult {
  double extreme = 0.0;  // max or min ratio, as documented per test
  double bound = 0.0;
  bool passed = false;
  std::size_t samples = 0;
};

struct DissipativityResult {
  double max_lff = 0.0;        // max (Lf, f)_μ / ‖f‖²
  double max_abs_aff = 0.0;    // max |(Af, f)_μ| / ‖f‖²
  double max_abs_invariance = 0.0;  // max |(Lf, 1)_μ| / ‖f‖
  bool passed = false;
  std::size_t samples = 0;
};

/// PASS iff every (Lf, f) ≤ 1e-6 and (Lf, 1) vanishes within 1e-8.
DissipativityResult test_dissipativity(const DiscreteOperator& L, const DiscreteOperator& A, const PhaseGrid& grid,
                                       const std::vector<Eigen::VectorXd>& fs);

/// min −(Sf, f)/‖(I−P_S)f‖²; PASS iff ≥ (1 − slack)·c_sigma.
InequalityResult test_microscopic_coercivity(const DiscreteOperator& S, const DiscreteOperator& P_S,
                                             const PhaseGrid& grid, const std::vector<Eigen::VectorXd>& fs,
                                             double c_sigma, double slack = 0.02);

/// min ‖APf‖²/‖Pf‖²; PASS iff ≥ (1 − slack)·lambda.
InequalityResult test_macroscopic_coercivity(const DiscreteOperator& A, const DiscreteOperator& P,
                                             const PhaseGrid& grid, const std::vector<Eigen::VectorXd>& fs,
                                             double lambda, double slack = 0.02);

/// max ‖Tf‖/‖(I−G)f‖ with Tf = b(v)·∂ₓ(P_S f); PASS iff ≤ (1 + slack)·√2·N_sigma.
InequalityResult test_bs_bound(const ModelSpec& model, const PhaseGrid& grid, const DiscreteOperator& G,
                               const DiscreteOperator& P_S, const std::vector<Eigen::VectorXd>& fs, double N_sigma,
                               double slack = 0.02);

// ---------------------------------------------------------------------------
// Spectrum

struct SpectralGap {
  double gap = 0.0;                  // min Re(−λ) over nonzero eigenvalues
  std::complex<double> eigenvalue;   // the λ attaining it
  std::string method;                // "dense" or "arnoldi"
  int converged = 0;
};

/// Spectral gap of −L on the μ-orthogonal complement of the constants.
/// Dense QR for small grids, shift-invert Arnoldi otherwise.
SpectralGap spectral_gap(const DiscreteOperator& L, const PhaseGrid& grid);

/// Forces the dense path; for cross-checks on small grids.
SpectralGap spectral_gap_dense(const DiscreteOperator& L, const PhaseGrid& grid);

}  // namespace hypocert
