#include "hypocert/errors.hpp"
#include "hypocert/philox.hpp"
#include "hypocert/sde.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace hypocert;

namespace {

double x1(std::span<const double> x, std::span<const double>) { return x[0]; }

}  // namespace

TEST_CASE("integrator names") {
  CHECK(parse_integrator("euler-maruyama") == Integrator::EulerMaruyama);
  CHECK(parse_integrator("milstein") == Integrator::Milstein);
  CHECK(to_string(Integrator::Milstein) == "milstein");
  CHECK_THROWS_AS(parse_integrator("heun"), UsageError);
}

TEST_CASE("normals follow the documented counter layout") {
  const std::uint64_t seed = 0x0123456789abcdefULL;
  const PhiloxNoise noise(seed);
  const Philox4x32::Key key{0x89abcdefu, 0x01234567u};
  // d = 3, path 5, step 2: normals 6, 7, 8 → block 1 lanes 2, 3 and block 2 lane 0
  double z[3];
  noise.normals(5, 2, z);
  const auto b1 = Philox4x32::generate({1, 0, 5, 0}, key);
  const auto b2 = Philox4x32::generate({2, 0, 5, 0}, key);
  CHECK(z[0] == box_muller_lane(b1, 2));
  CHECK(z[1] == box_muller_lane(b1, 3));
  CHECK(z[2] == box_muller_lane(b2, 0));
}

TEST_CASE("normals have unit variance") {
  const PhiloxNoise noise(12345);
  std::vector<double> values;
  double z[2];
  for (std::uint64_t p = 0; p < 20000; ++p) {
    noise.normals(p, 7, z);
    values.push_back(z[0]);
    values.push_back(z[1]);
  }
  const Estimate m = mean_and_se(values);
  CHECK(std::abs(m.mean) < 4.0 * m.se);
  std::vector<double> sq;
  for (double v : values) sq.push_back(v * v);
  const Estimate s = mean_and_se(sq);
  CHECK(std::abs(s.mean - 1.0) < 4.0 * s.se);
}

TEST_CASE("aggregated noise sums fine increments") {
  const PhiloxNoise fine(9);
  const AggregatedNoise coarse(fine, 4);
  double c[1], f[1], sum = 0.0;
  coarse.normals(3, 2, c);
  for (int r = 0; r < 4; ++r) {
    fine.normals(3, 8 + r, f);
    sum += f[0];
  }
  CHECK(c[0] == doctest::Approx(sum / 2.0).epsilon(1e-15));
  CHECK_THROWS_AS(AggregatedNoise(fine, 0), UsageError);
}

TEST_CASE("ensemble construction") {
  const ModelSpec classic = make_model("classic");
  const Ensemble e = make_ensemble(classic, 10, 1, Integrator::EulerMaruyama, Vector::Constant(1, 0.5));
  CHECK(e.state.size() == 20);
  CHECK(e.path(3)[0] == 0.5);
  CHECK(e.path(3)[1] == 0.0);
  CHECK_THROWS_AS(make_ensemble(make_model("aniso-2d"), 10, 1, Integrator::Milstein), UsageError);
  CHECK_THROWS_AS(make_ensemble(classic, 0, 1), UsageError);
}

TEST_CASE("trajectories are reproducible and independent of the thread count") {
  const ModelSpec m = make_model("bounded-bump");
  const PhiloxNoise noise(77);
  Ensemble a = make_ensemble(m, 1000, 77);
  Ensemble b = make_ensemble(m, 1000, 77);
  Ensemble c = make_ensemble(m, 1000, 77);
  advance(a, m, 0.01, 200, noise, 1);
  advance(b, m, 0.01, 200, noise, 1);
  advance(c, m, 0.01, 100, noise, 4);
  advance(c, m, 0.01, 100, noise, 3);
  CHECK(a.state == b.state);
  CHECK(a.state == c.state);
  CHECK(a.steps == 200);
  CHECK(a.time == doctest::Approx(2.0));
}

TEST_CASE("noise-free dynamics converge at first order to the damped oscillator") {
  const ModelSpec m = make_model("classic");
  const PhiloxNoise noise(1);
  // x'' + x' + x = 0 from (1, 0)
  const double w = std::sqrt(3.0) / 2.0;
  const double t = 2.0;
  const double exact = std::exp(-t / 2) * (std::cos(w * t) + std::sin(w * t) / (2.0 * w));
  double err[2];
  int idx = 0;
  for (double dt : {0.01, 0.005}) {
    Ensemble e = make_ensemble(m, 1, 0, Integrator::EulerMaruyama, Vector::Constant(1, 1.0));
    e.noise_scale = 0.0;
    advance(e, m, dt, static_cast<std::uint64_t>(std::llround(t / dt)), noise);
    err[idx++] = std::abs(e.path(0)[0] - exact);
  }
  CHECK(err[0] < 0.01);
  CHECK(std::log2(err[0] / err[1]) == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("blow-up is reported with the path and time") {
  const ModelSpec m = make_model("double-well");
  const PhiloxNoise noise(3);
  Ensemble e = make_ensemble(m, 4, 3, Integrator::EulerMaruyama, Vector::Constant(1, 10.0));
  try {
    advance(e, m, 0.5, 50, noise);
    FAIL("expected a blow-up");
  } catch (const BlowUpError& err) {
    CHECK(err.path() < 4);
    CHECK(err.time() > 0.0);
  }
}

TEST_CASE("stationary moments of the classic model") {
  const ModelSpec m = make_model("classic");
  const PhiloxNoise noise(2024);
  Ensemble e = make_ensemble(m, 20000, 2024);
  advance(e, m, 0.01, 1000, noise);
  const auto moments = stationary_moments(e, 1.0);
  REQUIRE(moments.size() == 5);
  for (const auto& mo : moments) {
    CAPTURE(mo.name);
    CAPTURE(mo.estimate.mean);
    CHECK(mo.within(3.0));
  }
}

TEST_CASE("quadratic covariation matches the compensator") {
  for (const char* name : {"classic", "bounded-bump"}) {
    CAPTURE(name);
    const ModelSpec m = make_model(name);
    const PhiloxNoise noise(55);
    Ensemble e = make_ensemble(m, 20000, 55);
    advance(e, m, 0.01, 500, noise);
    CovariationRecorder rec(e.n_paths, 1);
    advance(e, m, 0.01, 100, noise, 1, &rec);
    const CovariationEstimate q = quadratic_covariation(rec, 0, 0);
    CHECK(q.t == doctest::Approx(1.0));
    CHECK(q.consistent(3.0));
    CHECK(q.compensator.mean > 0.0);
  }
  CovariationRecorder empty(10, 1);
  CHECK_THROWS_AS(quadratic_covariation(empty, 0, 0), UsageError);
}

TEST_CASE("Milstein matches Euler-Maruyama for constant diffusion") {
  const ModelSpec m = make_model("classic");
  const PhiloxNoise noise(8);
  Ensemble a = make_ensemble(m, 100, 8, Integrator::EulerMaruyama);
  Ensemble b = make_ensemble(m, 100, 8, Integrator::Milstein);
  advance(a, m, 0.01, 100, noise);
  advance(b, m, 0.01, 100, noise);
  CHECK(a.state == b.state);
}

TEST_CASE("weak order of Euler-Maruyama") {
  const ModelSpec m = make_model("bounded-bump");
  const auto study = weak_order_study(
      m, 20000, 31, 1.0, {0.1, 0.05, 0.025}, 0.003125,
      [](std::span<const double> x, std::span<const double> v) { return x[0] * x[0] + v[0] * v[0]; },
      Vector::Constant(1, 1.0), Vector::Constant(1, 0.0));
  REQUIRE(study.orders.size() == 2);
  for (double order : study.orders) CHECK(order == doctest::Approx(1.0).epsilon(0.35));
}

TEST_CASE("autocovariance of x decays inside the envelope") {
  const ModelSpec m = make_model("classic");
  const PhiloxNoise noise(4);
  Ensemble e = make_ensemble(m, 20000, 4);
  advance(e, m, 0.01, 1000, noise);
  std::vector<double> lags;
  for (int k = 0; k <= 40; ++k) lags.push_back(0.1 * k);
  const MixingCurve c = mixing_curve(e, m, x1, lags, 0.01, noise, 2.0, 0.004, "x");
  CHECK(c.within_envelope(3.0));
  CHECK(c.variance.mean == doctest::Approx(1.0).epsilon(0.05));
  // exact OU autocovariance of x: e^{−t/2}(cos ωt + sin ωt /(2ω))
  const double w = std::sqrt(3.0) / 2.0;
  for (std::size_t k = 0; k < lags.size(); k += 10) {
    const double t = lags[k];
    const double exact = std::exp(-t / 2) * (std::cos(w * t) + std::sin(w * t) / (2.0 * w));
    CHECK(std::abs(c.autocovariance[k] - exact) < 4.0 * c.se[k] + 0.01);
  }
  Ensemble f = make_ensemble(m, 10, 4);
  CHECK_THROWS_AS(mixing_curve(f, m, x1, {0.0, 0.015}, 0.01, noise, 2.0, 0.004), UsageError);
}

TEST_CASE("snapshot layout and round trip") {
  const ModelSpec m = make_model("aniso-2d");
  const PhiloxNoise noise(6);
  Ensemble e = make_ensemble(m, 7, 0xfeedbeefULL);
  advance(e, m, 0.01, 10, noise);
  const auto path = (std::filesystem::temp_directory_path() / "hypocert_snapshot.bin").string();
  write_snapshot(e, path);
  CHECK(std::filesystem::file_size(path) == 32 + 8 * 7 * 4);
  std::ifstream in(path, std::ios::binary);
  unsigned char header[8];
  in.read(reinterpret_cast<char*>(header), 8);
  CHECK(header[0] == 7);
  for (int k = 1; k < 8; ++k) CHECK(header[k] == 0);
  const Ensemble r = read_snapshot(path);
  CHECK(r.n_paths == 7);
  CHECK(r.dim == 2);
  CHECK(r.seed == 0xfeedbeefULL);
  CHECK(r.time == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(r.state == e.state);
  std::filesystem::remove(path);
}

TEST_CASE("mean and standard error") {
  const Estimate e = mean_and_se({1.0, 2.0, 3.0, 4.0});
  CHECK(e.mean == doctest::Approx(2.5));
  CHECK(e.se == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
}
