#include "hypocert/errors.hpp"
#include "hypocert/operators.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

using namespace hypocert;

namespace {

struct Fixture {
  ModelSpec model = make_model("classic");
  PhaseGrid grid = build_grid(model, 64, 64, default_box(model));
};

// max over f of |(Mf, g) − (f, M⁺g)| style defect: |(Sf,g) − (f,Sg)| / (‖f‖‖g‖)
double symmetry_defect(const DiscreteOperator& op, const PhaseGrid& grid, const std::vector<Eigen::VectorXd>& fs,
                       double sign) {
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < fs.size(); ++k) {
    const auto& f = fs[k];
    const auto& g = fs[k + 1];
    const double lhs = grid.inner_product(op.apply(f), g);
    const double rhs = sign * grid.inner_product(f, op.apply(g));
    worst = std::max(worst, std::abs(lhs - rhs) / (grid.norm(f) * grid.norm(g)));
  }
  return worst;
}

}  // namespace

TEST_CASE("grid quadrature") {
  Fixture fx;
  const auto& g = fx.grid;
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(g.size()));
  CHECK(g.inner_product(one, one) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(g.x_weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.v_weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.mean(g.sample([](double x, double) { return x * x; })) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(g.mean(g.sample([](double, double v) { return v * v * v * v; })) == doctest::Approx(3.0).epsilon(1e-4));
  CHECK(g.mass(g.density()) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK((g.x_weights.array() > 0.0).all());
  CHECK((g.v_weights.array() > 0.0).all());
}

TEST_CASE("grid preconditions") {
  const ModelSpec m = make_model("classic");
  CHECK_THROWS_AS(build_grid(m, 8, 64, default_box(m)), UsageError);
  PhaseBox narrow = default_box(m);
  narrow.v_min = -4.0;
  CHECK_THROWS_AS(build_grid(m, 32, 32, narrow), UsageError);
  PhaseBox short_x = default_box(m);
  short_x.x_min = -3.0;
  CHECK_THROWS_AS(build_grid(m, 32, 32, short_x), UsageError);
  CHECK_THROWS_AS(build_grid(make_model("aniso-2d"), 32, 32, PhaseBox{}), UsageError);
}

TEST_CASE("generator basics") {
  Fixture fx;
  const auto& g = fx.grid;
  const DiscreteOperator L = assemble(fx.model, g, OperatorKind::L);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(g.size()));
  CHECK(L.apply(one).cwiseAbs().maxCoeff() < 1e-8);

  const DiscreteOperator PS = assemble(fx.model, g, OperatorKind::P_S);
  CHECK(PS.apply(g.sample([](double, double v) { return v; })).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("L v = -(x + v) in the interior, second order") {
  const ModelSpec m = make_model("classic");
  double err[2];
  int idx = 0;
  for (int n : {32, 64}) {
    const PhaseGrid g = build_grid(m, n, n, default_box(m));
    const DiscreteOperator L = assemble(m, g, OperatorKind::L);
    const Eigen::VectorXd Lv = L.apply(g.sample([](double, double v) { return v; }));
    double worst = 0.0;
    for (int i = 0; i < g.nx; ++i)
      for (int j = 0; j < g.nv; ++j) {
        const double x = g.x_nodes[i], v = g.v_nodes[j];
        if (std::abs(x) > 4.0 || std::abs(v) > 4.0) continue;
        worst = std::max(worst, std::abs(Lv[g.index(i, j)] + x + v));
      }
    err[idx++] = worst;
  }
  CHECK(err[1] < 1.0);
  CHECK(std::log2(err[0] / err[1]) > 1.8);
}

TEST_CASE("projections are idempotent") {
  Fixture fx;
  const auto fs = random_test_vectors(fx.grid, 10, 5);
  for (OperatorKind kind : {OperatorKind::P_S, OperatorKind::P}) {
    const DiscreteOperator P = assemble(fx.model, fx.grid, kind);
    for (const auto& f : fs) {
      const Eigen::VectorXd Pf = P.apply(f);
      CHECK(fx.grid.norm(P.apply(Pf) - Pf) <= 1e-10 * fx.grid.norm(f));
    }
  }
}

TEST_CASE("S is mu-symmetric and A is mu-antisymmetric") {
  for (const char* name : {"classic", "bounded-bump", "double-well"}) {
    CAPTURE(name);
    const ModelSpec m = make_model(name);
    const PhaseGrid g = build_grid(m, 48, 48, default_box(m));
    const auto fs = random_test_vectors(g, 8, 2);
    CHECK(symmetry_defect(assemble(m, g, OperatorKind::S), g, fs, 1.0) < 1e-12);
    CHECK(symmetry_defect(assemble(m, g, OperatorKind::A), g, fs, -1.0) < 1e-12);
    // L* = S + A is the μ-adjoint of L = S − A
    const DiscreteOperator L = assemble(m, g, OperatorKind::L);
    const DiscreteOperator Ls = assemble(m, g, OperatorKind::L_star);
    for (std::size_t k = 0; k + 1 < fs.size(); ++k) {
      const double lhs = g.inner_product(L.apply(fs[k]), fs[k + 1]);
      const double rhs = g.inner_product(fs[k], Ls.apply(fs[k + 1]));
      CHECK(std::abs(lhs - rhs) <= 1e-12 * g.norm(fs[k]) * g.norm(fs[k + 1]));
    }
  }
}

TEST_CASE("dissipativity and invariance on random functions") {
  Fixture fx;
  const DiscreteOperator L = assemble(fx.model, fx.grid, OperatorKind::L);
  const DiscreteOperator A = assemble(fx.model, fx.grid, OperatorKind::A);
  const auto fs = random_test_vectors(fx.grid, 50, 1);
  const DissipativityResult r = test_dissipativity(L, A, fx.grid, fs);
  CHECK(r.passed);
  CHECK(r.samples == 50);
  CHECK(r.max_lff <= 1e-6);
  CHECK(r.max_abs_aff <= 1e-8);
  CHECK(r.max_abs_invariance <= 1e-8);
}

TEST_CASE("coercivity ratios on the classic model") {
  Fixture fx;
  const auto& g = fx.grid;
  const DiscreteOperator S = assemble(fx.model, g, OperatorKind::S);
  const DiscreteOperator A = assemble(fx.model, g, OperatorKind::A);
  const DiscreteOperator PS = assemble(fx.model, g, OperatorKind::P_S);
  const DiscreteOperator P = assemble(fx.model, g, OperatorKind::P);
  const DiscreteOperator G = assemble(fx.model, g, OperatorKind::G);
  const auto fs = random_test_vectors(g, 50, 1);

  const InequalityResult micro = test_microscopic_coercivity(S, PS, g, fs, 1.0);
  CHECK(micro.passed);
  CHECK(micro.extreme >= 0.98);
  // x-only functions have (I − P_S)f = 0
  const auto xonly = random_test_vectors(g, 5, 1, SmoothTestFunction::Shape::XOnly);
  CHECK_THROWS_AS(test_microscopic_coercivity(S, PS, g, xonly, 1.0), UsageError);

  const InequalityResult macro = test_macroscopic_coercivity(A, P, g, fs, 1.0);
  CHECK(macro.passed);
  CHECK(macro.extreme >= 0.98);
  const Eigen::VectorXd fx_ = g.sample([](double x, double) { return x; });
  const Eigen::VectorXd Pf = P.apply(fx_);
  const double ratio = g.inner_product(A.apply(Pf), A.apply(Pf)) / g.inner_product(Pf, Pf);
  CHECK(ratio == doctest::Approx(1.0).epsilon(0.01));

  const InequalityResult bs = test_bs_bound(fx.model, g, G, PS, fs, 1.0);
  CHECK(bs.passed);
  CHECK(bs.extreme <= std::sqrt(2.0) * 1.02);
  const auto odd = random_test_vectors(g, 5, 3, SmoothTestFunction::Shape::OddInV);
  CHECK(test_bs_bound(fx.model, g, G, PS, odd, 1.0).extreme <= 1e-10);
}

TEST_CASE("G agrees with P A A P") {
  Fixture fx;
  const auto& g = fx.grid;
  const DiscreteOperator A = assemble(fx.model, g, OperatorKind::A);
  const DiscreteOperator P = assemble(fx.model, g, OperatorKind::P);
  const DiscreteOperator G = assemble(fx.model, g, OperatorKind::G);
  for (const auto& f : random_test_vectors(g, 5, 9)) {
    const Eigen::VectorXd a = G.apply(P.apply(f));
    const Eigen::VectorXd b = P.apply(A.apply(A.apply(P.apply(f))));
    CHECK(g.norm(a - b) <= 0.06 * g.norm(a));
  }
}

TEST_CASE("spectral gap oracles") {
  {
    Fixture fx;
    const SpectralGap gap = spectral_gap(assemble(fx.model, fx.grid, OperatorKind::L), fx.grid);
    CHECK(gap.gap == doctest::Approx(0.5).epsilon(0.04));
    CHECK(std::abs(gap.eigenvalue.imag()) == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(0.05));
  }
  {
    const ModelSpec m = make_model("gaussian", {{"variance", 0.25}});
    const PhaseGrid g = build_grid(m, 64, 64, default_box(m));
    CHECK(spectral_gap(assemble(m, g, OperatorKind::L), g).gap == doctest::Approx(0.5).epsilon(0.04));
  }
  {
    // Arnoldi and the dense path agree on a grid both can handle
    const ModelSpec m = make_model("bounded-bump");
    const PhaseGrid g = build_grid(m, 20, 20, default_box(m));
    const DiscreteOperator L = assemble(m, g, OperatorKind::L);
    const SpectralGap dense = spectral_gap_dense(L, g);
    CHECK(dense.method == "dense");
    CHECK(spectral_gap(L, g).gap == doctest::Approx(dense.gap).epsilon(1e-8));
  }
  {
    Fixture fx;
    CHECK_THROWS_AS(spectral_gap(assemble(fx.model, fx.grid, OperatorKind::S), fx.grid), UsageError);
  }
}

TEST_CASE("conjugation T L* T^-1 vs L_FP converges at second order") {
  const ModelSpec m = make_model("bounded-bump");
  const auto tf = SmoothTestFunction::random(100, default_box(m));
  double err[2], h[2];
  int idx = 0;
  for (int n : {32, 64}) {
    const PhaseGrid g = build_grid(m, n, n, default_box(m));
    const SparseMatrix C = conjugate_by_density(g, assemble(m, g, OperatorKind::L_star).matrix);
    const DiscreteOperator FP = assemble(m, g, OperatorKind::L_FP);
    const Eigen::VectorXd u = g.sample([&](double x, double v) { return tf(x, v); }).cwiseProduct(g.density());
    err[idx] = g.fp_norm(C * u - FP.matrix * u) / g.fp_norm(u);
    h[idx] = g.hx;
    ++idx;
  }
  CHECK(std::log(err[0] / err[1]) / std::log(h[0] / h[1]) >= 1.8);
}

TEST_CASE("operators export as MatrixMarket") {
  const ModelSpec m = make_model("classic");
  const PhaseGrid g = build_grid(m, 16, 16, default_box(m));
  const DiscreteOperator L = assemble(m, g, OperatorKind::L);
  const auto path = (std::filesystem::temp_directory_path() / "hypocert_test_L.mtx").string();
  export_triplets(L, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  std::istringstream tokens(header);
  std::vector<std::string> words{std::istream_iterator<std::string>(tokens), {}};
  CHECK(words == std::vector<std::string>{"%%MatrixMarket", "matrix", "coordinate", "real", "general"});
  std::filesystem::remove(path);
}

TEST_CASE("assembly is independent of the thread count") {
  const ModelSpec m = make_model("bounded-bump");
  const PhaseGrid g = build_grid(m, 32, 32, default_box(m));
  const DiscreteOperator a = assemble(m, g, OperatorKind::L, 1);
  const DiscreteOperator b = assemble(m, g, OperatorKind::L, 4);
  CHECK((Eigen::MatrixXd(a.matrix) - Eigen::MatrixXd(b.matrix)).cwiseAbs().maxCoeff() == 0.0);
}
