#include "hypocert/errors.hpp"
#include "hypocert/semigroup.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace hypocert;

namespace {

struct Classic {
  ModelSpec model = make_model("classic");
  PhaseGrid grid = build_grid(model, 64, 64, default_box(model));
  DiscreteOperator L = assemble(model, grid, OperatorKind::L);
};

}  // namespace

TEST_CASE("constants are stationary") {
  Classic c;
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(c.grid.size()));
  const Trajectory tr = evolve(c.L, one, EvolveOptions{});
  REQUIRE(tr.times.size() == 101);
  CHECK(tr.times.back() == doctest::Approx(10.0));
  for (const auto& u : tr.states) CHECK(c.grid.norm(u - one) < 1e-12);
}

TEST_CASE("the mean is conserved") {
  Classic c;
  const Eigen::VectorXd u0 = random_test_vectors(c.grid, 1, 4)[0];
  const double m0 = c.grid.mean(u0);
  for (const auto& u : evolve(c.L, u0, EvolveOptions{}).states) CHECK(std::abs(c.grid.mean(u) - m0) < 1e-8);
}

TEST_CASE("classic decay of x") {
  Classic c;
  const DecayCurve curve = decay_curve(c.L, c.grid, c.grid.sample([](double x, double) { return x; }),
                                       EvolveOptions{}, 2.0, 0.0040794, "x");
  CHECK(curve.window_start == doctest::Approx(2.0));
  CHECK(curve.window_end == doctest::Approx(10.0));
  CHECK(curve.fit.rate == doctest::Approx(0.5).epsilon(0.1));
  CHECK(curve.monotone());
  CHECK(curve.within_envelope());
  CHECK(curve.rate_certified());
  CHECK(curve.equilibrium_mean == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("constant observables are rejected") {
  Classic c;
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(c.grid.size()));
  CHECK_THROWS_AS(decay_curve(c.L, c.grid, one, EvolveOptions{}, 2.0, 0.004), UsageError);
}

TEST_CASE("contraction for random initial data on every 1-d built-in") {
  for (const char* name : {"classic", "bounded-bump", "double-well"}) {
    CAPTURE(name);
    const ModelSpec m = make_model(name);
    const PhaseGrid g = build_grid(m, 32, 32, default_box(m));
    const DiscreteOperator L = assemble(m, g, OperatorKind::L);
    EvolveOptions opt;
    opt.t_end = 5.0;
    const auto u0s = random_test_vectors(g, 10, 21);
    std::vector<std::string> labels(u0s.size(), "u");
    for (const auto& curve : decay_curves(L, g, u0s, labels, opt, 2.0, 0.001)) CHECK(curve.monotone());
  }
}

TEST_CASE("time-stepping order by step halving") {
  Classic c;
  EvolveOptions opt;
  opt.t_end = 1.0;
  opt.dt = 0.05;
  const Eigen::VectorXd u0 = c.grid.sample([](double x, double v) { return std::exp(-x * x) * v; });
  CHECK(step_halving_order(c.L, c.grid, u0, opt) == doctest::Approx(2.0).epsilon(0.1));
  opt.scheme = TimeScheme::ImplicitEuler;
  CHECK(step_halving_order(c.L, c.grid, u0, opt) == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("adjoint and forward decay rates agree") {
  Classic c;
  const DiscreteOperator Ls = assemble(c.model, c.grid, OperatorKind::L_star);
  const Eigen::VectorXd g = c.grid.sample([](double x, double) { return x; });
  const DecayCurve fwd = decay_curve(c.L, c.grid, g, EvolveOptions{}, 2.0, 0.004);
  const DecayCurve adj = decay_curve(Ls, c.grid, g, EvolveOptions{}, 2.0, 0.004);
  CHECK(adj.fit.rate == doctest::Approx(fwd.fit.rate).epsilon(0.05));
}

TEST_CASE("Fokker-Planck evolution") {
  Classic c;
  const DiscreteOperator FP = assemble(c.model, c.grid, OperatorKind::L_FP);

  SUBCASE("the equilibrium density is stationary") {
    const Eigen::VectorXd rho = c.grid.density() / c.grid.mass(c.grid.density());
    const FokkerPlanckRun run = evolve_fokker_planck(FP, c.grid, rho, EvolveOptions{}, 2.0, 0.004);
    for (const auto& u : run.trajectory.states) CHECK((u - rho).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("a tilted density relaxes at the gap") {
    const FokkerPlanckRun run =
        evolve_fokker_planck(FP, c.grid, tilted_density(c.grid, 1.0, 0.5), EvolveOptions{}, 2.0, 0.0040794);
    CHECK(run.max_mass_drift <= 1e-8);
    CHECK(run.curve.within_envelope());
    CHECK(run.curve.monotone());
    CHECK(run.curve.fit.rate == doctest::Approx(0.5).epsilon(0.1));
  }
  SUBCASE("preconditions") {
    Eigen::VectorXd rho = tilted_density(c.grid, 0.0, 0.0);
    CHECK_THROWS_AS(evolve_fokker_planck(FP, c.grid, 2.0 * rho, EvolveOptions{}, 2.0, 0.004), UsageError);
    rho[c.grid.index(10, 10)] = -1.0;
    CHECK_THROWS_AS(evolve_fokker_planck(FP, c.grid, rho, EvolveOptions{}, 2.0, 0.004), UsageError);
    CHECK_THROWS_AS(evolve_fokker_planck(c.L, c.grid, tilted_density(c.grid, 0.0, 0.0), EvolveOptions{}, 2.0, 0.004),
                    UsageError);
  }
}

TEST_CASE("conjugation consistency of the two evolutions") {
  const ModelSpec m = make_model("bounded-bump");
  double err[2];
  int idx = 0;
  for (int n : {32, 64}) {
    const PhaseGrid g = build_grid(m, n, n, default_box(m));
    const DiscreteOperator Ls = assemble(m, g, OperatorKind::L_star);
    const DiscreteOperator FP = assemble(m, g, OperatorKind::L_FP);
    EvolveOptions opt;
    opt.t_end = 1.0;
    const Eigen::VectorXd g0 = g.sample([](double x, double v) { return std::exp(-0.5 * (x - 0.5) * (x - 0.5)) * (1.0 + v); });
    const Eigen::VectorXd rho = g.density();
    const Eigen::VectorXd a = evolve(Ls, g0, opt).states.back().cwiseProduct(rho);
    const Eigen::VectorXd b = evolve(FP, g0.cwiseProduct(rho), opt).states.back();
    err[idx++] = g.fp_norm(a - b) / g.fp_norm(b);
  }
  CHECK(err[1] < 0.02);
  CHECK(err[1] < err[0] / 3.0);
}

TEST_CASE("envelope fit on an oscillating decay") {
  std::vector<double> t, n;
  for (int k = 0; k <= 1000; ++k) {
    t.push_back(0.01 * k);
    n.push_back(std::exp(-0.5 * t.back()) * (1.0 + 0.8 * std::cos(3.0 * t.back())));
  }
  const RateFit fit = fit_envelope_rate(t, n, 2.0, 10.0);
  CHECK(fit.rate == doctest::Approx(0.5).epsilon(0.03));
  CHECK(fit.points > 100);
  CHECK_THROWS_AS(fit_envelope_rate(t, n, 20.0, 30.0), UsageError);
}

TEST_CASE("parallel curves match serial ones") {
  const ModelSpec m = make_model("bounded-bump");
  const PhaseGrid g = build_grid(m, 32, 32, default_box(m));
  const DiscreteOperator L = assemble(m, g, OperatorKind::L);
  EvolveOptions opt;
  opt.t_end = 2.0;
  const auto u0s = random_test_vectors(g, 3, 8);
  const std::vector<std::string> labels = {"a", "b", "c"};
  const auto serial = decay_curves(L, g, u0s, labels, opt, 2.0, 0.001, 1);
  const auto parallel = decay_curves(L, g, u0s, labels, opt, 2.0, 0.001, 3);
  for (std::size_t k = 0; k < serial.size(); ++k) CHECK(serial[k].norms == parallel[k].norms);
}

TEST_CASE("decay CSV layout") {
  Classic c;
  EvolveOptions opt;
  opt.t_end = 1.0;
  const DecayCurve curve = decay_curve(c.L, c.grid, c.grid.sample([](double x, double) { return x; }), opt, 2.0, 0.004);
  const auto path = (std::filesystem::temp_directory_path() / "hypocert_decay.csv").string();
  write_decay_csv(curve, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,norm,envelope,fit,residual");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == static_cast<int>(curve.times.size()));
  std::filesystem::remove(path);
}

TEST_CASE("scheme names") {
  CHECK(parse_scheme("crank-nicolson") == TimeScheme::CrankNicolson);
  CHECK(parse_scheme("implicit-euler") == TimeScheme::ImplicitEuler);
  CHECK(to_string(TimeScheme::CrankNicolson) == "crank-nicolson");
  CHECK_THROWS_AS(parse_scheme("rk4"), UsageError);
}
