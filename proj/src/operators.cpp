#include "hypocert/operators.hpp"

#include "hypocert/assumptions.hpp"
#include "hypocert/errors.hpp"
#include "hypocert/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/SparseExtra>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace hypocert {

namespace {

using Triplet = Eigen::Triplet<double>;
using RowFn = std::function<void(int i, std::vector<Triplet>&)>;

// Rows are generated per x-index in chunks; concatenation keeps the order fixed.
SparseMatrix build_rows(const PhaseGrid& g, int threads, const RowFn& fn) {
  const int workers = std::max(1, std::min(threads, g.nx));
  std::vector<std::vector<Triplet>> parts(workers);
  const std::size_t chunk = (static_cast<std::size_t>(g.nx) + workers - 1) / workers;
  parallel_for(static_cast<std::size_t>(workers), workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t w = b; w < e; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min<std::size_t>(g.nx, lo + chunk);
      for (std::size_t i = lo; i < hi; ++i) fn(static_cast<int>(i), parts[w]);
    }
  });
  std::vector<Triplet> all;
  for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  SparseMatrix m(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g.size()));
  m.setFromTriplets(all.begin(), all.end());
  m.makeCompressed();
  for (Eigen::Index k = 0; k < m.nonZeros(); ++k)
    if (!std::isfinite(m.valuePtr()[k])) throw NumericError("non-finite operator entry");
  return m;
}

// Face-to-node density ratios: plus[i] = p̄_{i+1/2}/p_i, minus[i] = p̄_{i−1/2}/p_i,
// zero at the truncation boundary (closed with zero flux). deriv is the
// discrete −p′/p, i.e. Φ′ for the x density and v for the Gaussian.
struct Ratios {
  Eigen::VectorXd plus, minus, deriv;
};

Ratios exact_ratios(const Eigen::VectorXd& node, const Eigen::VectorXd& mid, double h) {
  const auto n = node.size();
  Ratios r{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd()};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i + 1 < n) r.plus[i] = std::exp(mid[i] - node[i]);
    if (i > 0) r.minus[i] = std::exp(mid[i - 1] - node[i]);
  }
  r.deriv = -(r.plus - r.minus) / h;
  return r;
}

// Same with geometric-mean faces, log p̃_{i+1/2} = (log p_i + log p_{i+1})/2.
Ratios geometric_ratios(const Eigen::VectorXd& node, double h) {
  const auto n = node.size();
  Ratios r{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd()};
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i + 1 < n) r.plus[i] = std::exp(0.5 * (node[i + 1] - node[i]));
    if (i > 0) r.minus[i] = std::exp(0.5 * (node[i - 1] - node[i]));
  }
  r.deriv = -(r.plus - r.minus) / h;
  return r;
}

double scalar_diffusion(const ModelSpec& model, double v) {
  double a = 0.0;
  model.diffusion().eval_into(std::span<const double>(&v, 1), std::span<double>(&a, 1));
  if (!std::isfinite(a)) throw EvaluationError("non-finite diffusion coefficient at v = " + std::to_string(v), "a11");
  return a;
}

double potential_at(const Potential& phi, double x) {
  const double value = phi.value(std::span<const double>(&x, 1));
  if (!std::isfinite(value)) throw EvaluationError("non-finite potential at x = " + std::to_string(x), "Phi");
  return value;
}

struct Stencils {
  Ratios x, v;
  std::vector<double> a_mid;  // a at v-cell midpoints
};

Stencils stencils(const ModelSpec& model, const PhaseGrid& g) {
  Stencils s{exact_ratios(g.x_log_density, g.x_mid_log_density, g.hx),
             exact_ratios(g.v_log_density, g.v_mid_log_density, g.hv), {}};
  s.a_mid.resize(g.nv - 1);
  for (int j = 0; j + 1 < g.nv; ++j) s.a_mid[j] = scalar_diffusion(model, 0.5 * (g.v_nodes[j] + g.v_nodes[j + 1]));
  return s;
}

// S f = (1/q) ∂ᵥ(q a ∂ᵥ f), scaled by cs; A f = Φ′∂ᵥf − v∂ₓf, scaled by ca.
void emit_generator_row(const PhaseGrid& g, const Stencils& s, int i, double cs, double ca,
                        std::vector<Triplet>& t) {
  const double inv_hv2 = 1.0 / (g.hv * g.hv);
  for (int j = 0; j < g.nv; ++j) {
    const auto row = g.index(i, j);
    double diag = 0.0;
    if (cs != 0.0) {
      if (j + 1 < g.nv) {
        const double c = cs * s.v.plus[j] * s.a_mid[j] * inv_hv2;
        t.emplace_back(row, g.index(i, j + 1), c);
        diag -= c;
      }
      if (j > 0) {
        const double c = cs * s.v.minus[j] * s.a_mid[j - 1] * inv_hv2;
        t.emplace_back(row, g.index(i, j - 1), c);
        diag -= c;
      }
      t.emplace_back(row, row, diag);
    }
    if (ca != 0.0) {
      const double cv = ca * s.x.deriv[i] / (2.0 * g.hv);
      if (j + 1 < g.nv) t.emplace_back(row, g.index(i, j + 1), cv * s.v.plus[j]);
      if (j > 0) t.emplace_back(row, g.index(i, j - 1), -cv * s.v.minus[j]);
      const double cx = -ca * s.v.deriv[j] / (2.0 * g.hx);
      if (i + 1 < g.nx) t.emplace_back(row, g.index(i + 1, j), cx * s.x.plus[i]);
      if (i > 0) t.emplace_back(row, g.index(i - 1, j), -cx * s.x.minus[i]);
    }
  }
}

// (Lx g)_i = [p̄₊(g_{i+1} − g_i) − p̄₋(g_i − g_{i−1})]/(p_i hx²), the x-part of G.
std::array<double, 3> x_laplacian_row(const PhaseGrid& g, const Ratios& x, int i) {
  const double inv = 1.0 / (g.hx * g.hx);
  return {x.minus[i] * inv, -(x.plus[i] + x.minus[i]) * inv, x.plus[i] * inv};
}

SparseMatrix fokker_planck(const ModelSpec& model, const PhaseGrid& g, int threads) {
  const Ratios xr = geometric_ratios(g.x_log_density, g.hx);
  const Ratios vr = geometric_ratios(g.v_log_density, g.hv);
  std::vector<double> a(g.nv);
  for (int j = 0; j < g.nv; ++j) a[j] = scalar_diffusion(model, g.v_nodes[j]);
  const auto& lp = g.x_log_density;
  const auto& lq = g.v_log_density;
  // p̃_{face}/p_node for the face between `node` and `other`
  auto face = [](double node, double other) { return std::exp(0.5 * (other - node)); };
  const double hv2 = g.hv * g.hv;

  return build_rows(g, threads, [&](int i, std::vector<Triplet>& t) {
    for (int j = 0; j < g.nv; ++j) {
      const auto row = g.index(i, j);
      // ∂ᵥ(a q ∂ᵥ(u/q)) with flux ã q̃ (u_{j+1}/q_{j+1} − u_j/q_j)/hv
      if (j + 1 < g.nv) {
        const double c = 0.5 * (a[j] + a[j + 1]) / hv2;
        t.emplace_back(row, g.index(i, j + 1), c * face(lq[j + 1], lq[j]));
        t.emplace_back(row, row, -c * face(lq[j], lq[j + 1]));
      }
      if (j > 0) {
        const double c = 0.5 * (a[j] + a[j - 1]) / hv2;
        t.emplace_back(row, g.index(i, j - 1), c * face(lq[j - 1], lq[j]));
        t.emplace_back(row, row, -c * face(lq[j], lq[j - 1]));
      }
      // −∂ₓ(v u) with flux v̂ p̃ (u_i/p_i + u_{i+1}/p_{i+1})/2
      const double cx = vr.deriv[j] / (2.0 * g.hx);
      if (i + 1 < g.nx) {
        t.emplace_back(row, row, -cx * face(lp[i], lp[i + 1]));
        t.emplace_back(row, g.index(i + 1, j), -cx * face(lp[i + 1], lp[i]));
      }
      if (i > 0) {
        t.emplace_back(row, row, cx * face(lp[i], lp[i - 1]));
        t.emplace_back(row, g.index(i - 1, j), cx * face(lp[i - 1], lp[i]));
      }
      // +∂ᵥ(Φ′u) with flux Φ̂′ q̃ (u_j/q_j + u_{j+1}/q_{j+1})/2
      const double cv = xr.deriv[i] / (2.0 * g.hv);
      if (j + 1 < g.nv) {
        t.emplace_back(row, row, cv * face(lq[j], lq[j + 1]));
        t.emplace_back(row, g.index(i, j + 1), cv * face(lq[j + 1], lq[j]));
      }
      if (j > 0) {
        t.emplace_back(row, row, -cv * face(lq[j], lq[j - 1]));
        t.emplace_back(row, g.index(i, j - 1), -cv * face(lq[j - 1], lq[j]));
      }
    }
  });
}

double hermite(int n, double t) {
  double h0 = 1.0, h1 = t;
  if (n == 0) return h0;
  for (int k = 1; k < n; ++k) {
    const double h2 = t * h1 - k * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

double bump(double t) {
  if (std::abs(t) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - t * t));
}

// Eigenvalues of L with the constant mode removed, from a sorted list of
// candidate λ; returns the one with smallest −Re λ.
SpectralGap pick_gap(const std::vector<std::complex<double>>& eigs, const std::string& method) {
  SpectralGap out;
  out.method = method;
  out.gap = std::numeric_limits<double>::infinity();
  for (const auto& l : eigs) {
    if (-l.real() < out.gap) {
      out.gap = -l.real();
      out.eigenvalue = l;
    }
  }
  out.converged = static_cast<int>(eigs.size());
  if (eigs.empty()) throw NumericError("eigensolve produced no usable eigenvalue");
  return out;
}

// W^{1/2} L W^{−1/2}: the generator in coordinates where the μ-inner product
// is Euclidean.
SparseMatrix balanced(const PhaseGrid& grid, const SparseMatrix& op) {
  SparseMatrix out = op;
  const Eigen::VectorXd logw = grid.weights().array().log();
  for (Eigen::Index r = 0; r < out.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(out, r); it; ++it) it.valueRef() *= std::exp(0.5 * (logw[r] - logw[it.col()]));
  return out;
}

SpectralGap arnoldi_gap(const DiscreteOperator& L, const PhaseGrid& grid) {
  constexpr double sigma = 0.3;
  const Eigen::Index n = static_cast<Eigen::Index>(grid.size());
  const Eigen::VectorXd root_w = grid.weights().array().sqrt();
  Eigen::SparseMatrix<double> M = balanced(grid, L.matrix);
  Eigen::SparseMatrix<double> I(n, n);
  I.setIdentity();
  M -= sigma * I;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(M);
  if (lu.info() != Eigen::Success) throw NumericError("shift-invert factorisation failed");
  auto project = [&](Eigen::VectorXd& x) { x -= root_w * root_w.dot(x); };

  double previous = std::numeric_limits<double>::quiet_NaN();
  SpectralGap result;
  for (int m : {60, 120, 200, 300}) {
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, m + 1);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m + 1, m);
    std::mt19937_64 rng(20240517);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Eigen::VectorXd v0(n);
    for (Eigen::Index k = 0; k < n; ++k) v0[k] = uni(rng);
    project(v0);
    V.col(0) = v0 / v0.norm();
    int steps = m;
    bool breakdown = false;
    for (int k = 0; k < m; ++k) {
      Eigen::VectorXd w = lu.solve(V.col(k));
      project(w);
      for (int pass = 0; pass < 2; ++pass) {
        for (int l = 0; l <= k; ++l) {
          const double h = V.col(l).dot(w);
          H(l, k) += h;
          w -= h * V.col(l);
        }
      }
      H(k + 1, k) = w.norm();
      if (H(k + 1, k) < 1e-12 * H.col(k).norm()) {
        steps = k + 1;
        breakdown = true;
        break;
      }
      V.col(k + 1) = w / H(k + 1, k);
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(H.topLeftCorner(steps, steps), true);
    if (es.info() != Eigen::Success) throw NumericError("Hessenberg eigensolve failed");
    const double beta = breakdown ? 0.0 : H(steps, steps - 1);
    std::vector<std::complex<double>> accepted;
    for (int k = 0; k < steps; ++k) {
      const std::complex<double> theta = es.eigenvalues()[k];
      if (std::abs(theta) == 0.0) continue;
      const Eigen::VectorXcd y = es.eigenvectors().col(k);
      const double residual = beta * std::abs(y[steps - 1]) / y.norm();
      if (residual > 1e-6 * std::abs(theta)) continue;
      const std::complex<double> lambda = sigma + 1.0 / theta;
      if (std::abs(lambda) < 1e-6) continue;
      accepted.push_back(lambda);
    }
    if (accepted.empty()) continue;
    result = pick_gap(accepted, "arnoldi");
    if (breakdown || std::abs(result.gap - previous) <= 1e-8 * std::max(1.0, std::abs(result.gap))) return result;
    previous = result.gap;
  }
  throw NumericError("shift-invert Arnoldi did not converge");
}

}  // namespace

// ---------------------------------------------------------------------------
// Grid

PhaseBox default_box(const ModelSpec& model) {
  PhaseBox box;
  const double L = default_x_halfwidth(model.potential());
  box.x_min = -L;
  box.x_max = L;
  return box;
}

Eigen::VectorXd PhaseGrid::weights() const {
  Eigen::VectorXd w(static_cast<Eigen::Index>(size()));
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nv; ++j) w[index(i, j)] = x_weights[i] * v_weights[j];
  return w;
}

Eigen::VectorXd PhaseGrid::density() const {
  Eigen::VectorXd r(static_cast<Eigen::Index>(size()));
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nv; ++j) r[index(i, j)] = std::exp(x_log_density[i] + v_log_density[j]);
  return r;
}

double PhaseGrid::inner_product(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const {
  if (f.size() != static_cast<Eigen::Index>(size()) || g.size() != f.size())
    throw UsageError("grid function has the wrong length");
  std::vector<double> terms(size());
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nv; ++j) {
      const auto k = index(i, j);
      terms[k] = x_weights[i] * v_weights[j] * f[k] * g[k];
    }
  return pairwise_sum(terms);
}

double PhaseGrid::norm(const Eigen::VectorXd& f) const { return std::sqrt(inner_product(f, f)); }

double PhaseGrid::mean(const Eigen::VectorXd& f) const {
  return inner_product(f, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(size())));
}

double PhaseGrid::fp_norm(const Eigen::VectorXd& u) const {
  std::vector<double> terms(size());
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nv; ++j) {
      const auto k = index(i, j);
      terms[k] = u[k] * u[k] * std::exp(-(x_log_density[i] + v_log_density[j]));
    }
  return std::sqrt(pairwise_sum(terms) * hx * hv);
}

double PhaseGrid::mass(const Eigen::VectorXd& u) const {
  return pairwise_sum(u.data(), static_cast<std::size_t>(u.size())) * hx * hv;
}

Eigen::VectorXd PhaseGrid::sample(const std::function<double(double, double)>& f) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nv; ++j) out[index(i, j)] = f(x_nodes[i], v_nodes[j]);
  return out;
}

PhaseGrid build_grid(const ModelSpec& model, int nx, int nv, const PhaseBox& box) {
  if (model.dim() != 1) throw UsageError("phase-space grids are only available for d = 1");
  if (nx < 16 || nv < 16) throw UsageError("grid needs nx, nv >= 16");
  if (!(std::isfinite(box.x_min) && std::isfinite(box.x_max) && std::isfinite(box.v_min) &&
        std::isfinite(box.v_max)) ||
      !(box.x_min < box.x_max) || !(box.v_min < box.v_max))
    throw UsageError("degenerate truncation box");
  if (box.v_min > -6.0 || box.v_max < 6.0) throw UsageError("velocity box must contain [-6, 6]");

  PhaseGrid g;
  g.nx = nx;
  g.nv = nv;
  g.box = box;
  g.hx = (box.x_max - box.x_min) / (nx - 1);
  g.hv = (box.v_max - box.v_min) / (nv - 1);
  g.x_nodes = Eigen::VectorXd::LinSpaced(nx, box.x_min, box.x_max);
  g.v_nodes = Eigen::VectorXd::LinSpaced(nv, box.v_min, box.v_max);

  const Potential& phi = model.potential();
  g.x_log_density.resize(nx);
  g.x_mid_log_density.resize(nx - 1);
  for (int i = 0; i < nx; ++i) g.x_log_density[i] = -potential_at(phi, g.x_nodes[i]);
  for (int i = 0; i + 1 < nx; ++i) g.x_mid_log_density[i] = -potential_at(phi, 0.5 * (g.x_nodes[i] + g.x_nodes[i + 1]));
  const double peak = g.x_log_density.maxCoeff();
  if (peak - g.x_log_density[0] < 30.0 || peak - g.x_log_density[nx - 1] < 30.0)
    throw UsageError("position box too small: the potential must rise by 30 at both edges");

  const double log_norm_v = -0.5 * std::log(2.0 * std::numbers::pi);
  g.v_log_density = g.v_nodes.unaryExpr([&](double v) { return -0.5 * v * v + log_norm_v; });
  g.v_mid_log_density.resize(nv - 1);
  for (int j = 0; j + 1 < nv; ++j) {
    const double m = 0.5 * (g.v_nodes[j] + g.v_nodes[j + 1]);
    g.v_mid_log_density[j] = -0.5 * m * m + log_norm_v;
  }

  auto normalised = [](const Eigen::VectorXd& logd) {
    Eigen::VectorXd w = logd.array().exp();
    const double total = pairwise_sum(w.data(), static_cast<std::size_t>(w.size()));
    if (!std::isfinite(total) || total <= 0.0) throw NumericError("density underflow on the grid");
    return Eigen::VectorXd(w / total);
  };
  g.x_weights = normalised(g.x_log_density);
  g.v_weights = normalised(g.v_log_density);
  if ((g.x_weights.array() <= 0.0).any() || (g.v_weights.array() <= 0.0).any())
    throw NumericError("non-positive quadrature weight");
  return g;
}

// ---------------------------------------------------------------------------
// Operators

std::string to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::L: return "L";
    case OperatorKind::S: return "S";
    case OperatorKind::A: return "A";
    case OperatorKind::G: return "G";
    case OperatorKind::P: return "P";
    case OperatorKind::P_S: return "P_S";
    case OperatorKind::L_FP: return "L_FP";
    case OperatorKind::L_star: return "L_star";
  }
  return "?";
}

Eigen::VectorXd DiscreteOperator::apply(const Eigen::VectorXd& f) const {
  Eigen::VectorXd out = matrix * f;
  if (has_rank_one()) out -= rank_one_u * rank_one_w.dot(f);
  return out;
}

DiscreteOperator assemble(const ModelSpec& model, const PhaseGrid& grid, OperatorKind kind, int threads) {
  if (model.dim() != 1) throw UsageError("operators are only assembled for d = 1");
  if (grid.size() == 0) throw UsageError("grid not built");
  DiscreteOperator op;
  op.kind = kind;
  const Stencils st = stencils(model, grid);

  auto generator = [&](double cs, double ca) {
    return build_rows(grid, threads, [&](int i, std::vector<Triplet>& t) { emit_generator_row(grid, st, i, cs, ca, t); });
  };
  auto velocity_average = [&](int i, std::vector<Triplet>& t) {
    for (int j = 0; j < grid.nv; ++j)
      for (int k = 0; k < grid.nv; ++k) t.emplace_back(grid.index(i, j), grid.index(i, k), grid.v_weights[k]);
  };

  switch (kind) {
    case OperatorKind::L: op.matrix = generator(1.0, -1.0); break;
    case OperatorKind::L_star: op.matrix = generator(1.0, 1.0); break;
    case OperatorKind::S: op.matrix = generator(1.0, 0.0); break;
    case OperatorKind::A: op.matrix = generator(0.0, 1.0); break;
    case OperatorKind::P_S: op.matrix = build_rows(grid, threads, velocity_average); break;
    case OperatorKind::P:
      op.matrix = build_rows(grid, threads, velocity_average);
      op.rank_one_u = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(grid.size()));
      op.rank_one_w = grid.weights();
      break;
    case OperatorKind::G:
      op.matrix = build_rows(grid, threads, [&](int i, std::vector<Triplet>& t) {
        const auto c = x_laplacian_row(grid, st.x, i);
        for (int di = -1; di <= 1; ++di) {
          const int ii = i + di;
          if (ii < 0 || ii >= grid.nx || c[di + 1] == 0.0) continue;
          for (int j = 0; j < grid.nv; ++j)
            for (int k = 0; k < grid.nv; ++k)
              t.emplace_back(grid.index(i, j), grid.index(ii, k), c[di + 1] * grid.v_weights[k]);
        }
      });
      break;
    case OperatorKind::L_FP: op.matrix = fokker_planck(model, grid, threads); break;
  }
  return op;
}

SparseMatrix conjugate_by_density(const PhaseGrid& grid, const SparseMatrix& op) {
  SparseMatrix out = op;
  auto log_rho = [&](Eigen::Index k) {
    return grid.x_log_density[k / grid.nv] + grid.v_log_density[k % grid.nv];
  };
  for (Eigen::Index r = 0; r < out.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(out, r); it; ++it) it.valueRef() *= std::exp(log_rho(r) - log_rho(it.col()));
  return out;
}

void export_triplets(const DiscreteOperator& op, const std::string& path) {
  if (!Eigen::saveMarket(op.matrix, path)) throw Error("cannot write operator to " + path);
}

// ---------------------------------------------------------------------------
// Test functions

SmoothTestFunction SmoothTestFunction::random(std::uint64_t seed, const PhaseBox& box, Shape shape, int degree) {
  if (degree < 0) throw UsageError("test function degree must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> shift(-0.5, 0.5);
  SmoothTestFunction f;
  f.x_center_ = 0.5 * (box.x_min + box.x_max);
  f.x_radius_ = 0.85 * 0.5 * (box.x_max - box.x_min);
  f.v_center_ = 0.5 * (box.v_min + box.v_max);
  f.v_radius_ = 0.85 * 0.5 * (box.v_max - box.v_min);
  f.x_shift_ = f.x_center_ + shift(rng);
  f.v_shift_ = f.v_center_ + shift(rng);
  f.cutoff_v_ = shape != Shape::XOnly;
  f.coeff_ = Eigen::MatrixXd::Zero(degree + 1, degree + 1);
  for (int m = 0; m <= degree; ++m)
    for (int n = 0; n <= degree; ++n) {
      const double c = normal(rng) / ((1.0 + m + n) * (1.0 + m + n));
      if (shape == Shape::XOnly && n > 0) continue;
      if (shape == Shape::OddInV && n % 2 == 0) continue;
      f.coeff_(m, n) = c;
    }
  if (shape == Shape::OddInV) f.v_shift_ = f.v_center_;  // keeps oddness about the box centre
  return f;
}

double SmoothTestFunction::operator()(double x, double v) const {
  const double cx = bump((x - x_center_) / x_radius_);
  const double cv = cutoff_v_ ? bump((v - v_center_) / v_radius_) : 1.0;
  if (cx == 0.0 || cv == 0.0) return 0.0;
  double s = 0.0;
  for (Eigen::Index m = 0; m < coeff_.rows(); ++m) {
    const double hm = hermite(static_cast<int>(m), x - x_shift_);
    for (Eigen::Index n = 0; n < coeff_.cols(); ++n)
      if (coeff_(m, n) != 0.0) s += coeff_(m, n) * hm * hermite(static_cast<int>(n), v - v_shift_);
  }
  return cx * cv * s;
}

std::vector<Eigen::VectorXd> random_test_vectors(const PhaseGrid& grid, std::size_t count, std::uint64_t seed,
                                                 SmoothTestFunction::Shape shape) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto f = SmoothTestFunction::random(seed + 7919 * k, grid.box, shape);
    out.push_back(grid.sample([&](double x, double v) { return f(x, v); }));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inequality tests

DissipativityResult test_dissipativity(const DiscreteOperator& L, const DiscreteOperator& A, const PhaseGrid& grid,
                                       const std::vector<Eigen::VectorXd>& fs) {
  DissipativityResult r;
  r.max_lff = -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(grid.size()));
  for (const auto& f : fs) {
    const double nf2 = grid.inner_product(f, f);
    if (nf2 <= 0.0) continue;
    const Eigen::VectorXd Lf = L.apply(f);
    r.max_lff = std::max(r.max_lff, grid.inner_product(Lf, f) / nf2);
    r.max_abs_aff = std::max(r.max_abs_aff, std::abs(grid.inner_product(A.apply(f), f)) / nf2);
    r.max_abs_invariance = std::max(r.max_abs_invariance, std::abs(grid.inner_product(Lf, one)) / std::sqrt(nf2));
    ++r.samples;
  }
  if (r.samples == 0) throw UsageError("dissipativity test needs a non-zero test function");
  r.passed = r.max_lff <= 1e-6 && r.max_abs_invariance <= 1e-8 && r.max_abs_aff <= 1e-8;
  return r;
}

InequalityResult test_microscopic_coercivity(const DiscreteOperator& S, const DiscreteOperator& P_S,
                                             const PhaseGrid& grid, const std::vector<Eigen::VectorXd>& fs,
                                             double c_sigma, double slack) {
  InequalityResult r;
  r.extreme = std::numeric_limits<double>::infinity();
  r.bound = (1.0 - slack) * c_sigma;
  for (const auto& f : fs) {
    const Eigen::VectorXd micro = f - P_S.apply(f);
    const double den = grid.inner_product(micro, micro);
    if (den < 1e-10) continue;
    r.extreme = std::min(r.extreme, -grid.inner_product(S.apply(f), f) / den);
    ++r.samples;
  }
  if (r.samples == 0) throw UsageError("microscopic coercivity: every (I - P_S)f vanished");
  r.passed = r.extreme >= r.bound;
  return r;
}

InequalityResult test_macroscopic_coercivity(const DiscreteOperator& A, const DiscreteOperator& P,
                                             const PhaseGrid& grid, const std::vector<Eigen::VectorXd>& fs,
                                             double lambda, double slack) {
  InequalityResult r;
  r.extreme = std::numeric_limits<double>::infinity();
  r.bound = (1.0 - slack) * lambda;
  for (const auto& f : fs) {
    const Eigen::VectorXd Pf = P.apply(f);
    const double den = grid.inner_product(Pf, Pf);
    if (den < 1e-10) continue;
    const Eigen::VectorXd APf = A.apply(Pf);
    r.extreme = std::min(r.extreme, grid.inner_product(APf, APf) / den);
    ++r.samples;
  }
  if (r.samples == 0) throw UsageError("macroscopic coercivity: every Pf vanished");
  r.passed = r.extreme >= r.bound;
  return r;
}

InequalityResult test_bs_bound(const ModelSpec& model, const PhaseGrid& grid, const DiscreteOperator& G,
                               const DiscreteOperator& P_S, const std::vector<Eigen::VectorXd>& fs, double N_sigma,
                               double slack) {
  const Stencils st = stencils(model, grid);
  std::vector<double> b(grid.nv);
  for (int j = 0; j < grid.nv; ++j) b[j] = drift_correction(model.diffusion(), Vector::Constant(1, grid.v_nodes[j]))[0];

  InequalityResult r;
  r.bound = (1.0 + slack) * std::sqrt(2.0) * N_sigma;
  for (const auto& f : fs) {
    const Eigen::VectorXd fS = P_S.apply(f);
    Eigen::VectorXd Tf(f.size());
    for (int i = 0; i < grid.nx; ++i) {
      const double c = fS[grid.index(i, 0)];
      const double up = i + 1 < grid.nx ? st.x.plus[i] * (fS[grid.index(i + 1, 0)] - c) : 0.0;
      const double down = i > 0 ? st.x.minus[i] * (c - fS[grid.index(i - 1, 0)]) : 0.0;
      const double dx = (up + down) / (2.0 * grid.hx);
      for (int j = 0; j < grid.nv; ++j) Tf[grid.index(i, j)] = b[j] * dx;
    }
    const Eigen::VectorXd resolvent = f - G.apply(f);
    const double den = grid.norm(resolvent);
    if (den < 1e-10) continue;
    r.extreme = std::max(r.extreme, grid.norm(Tf) / den);
    ++r.samples;
  }
  if (r.samples == 0) throw UsageError("BS bound: every (I - G)f vanished");
  r.passed = r.extreme <= r.bound;
  return r;
}

// ---------------------------------------------------------------------------
// Spectrum

SpectralGap spectral_gap_dense(const DiscreteOperator& L, const PhaseGrid& grid) {
  const Eigen::MatrixXd M = Eigen::MatrixXd(balanced(grid, L.matrix));
  Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
  if (es.info() != Eigen::Success) throw NumericError("dense eigensolve did not converge");
  std::vector<std::complex<double>> eigs(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  // the constant mode (L1 = 0) is the eigenvalue of least modulus
  const auto zero = std::min_element(eigs.begin(), eigs.end(),
                                     [](const auto& a, const auto& b) { return std::abs(a) < std::abs(b); });
  eigs.erase(zero);
  return pick_gap(eigs, "dense");
}

SpectralGap spectral_gap(const DiscreteOperator& L, const PhaseGrid& grid) {
  if (L.kind != OperatorKind::L && L.kind != OperatorKind::L_star) throw UsageError("spectral gap needs L or L*");
  if (grid.size() > 10000) throw UsageError("spectral gap limited to nx*nv <= 10^4");
  if (grid.size() <= 576) return spectral_gap_dense(L, grid);
  return arnoldi_gap(L, grid);
}

}  // namespace hypocert
