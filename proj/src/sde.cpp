#include "hypocert/sde.hpp"

#include "hypocert/errors.hpp"
#include "hypocert/parallel.hpp"
#include "hypocert/philox.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace hypocert {

namespace {

struct Workspace {
  explicit Workspace(int d)
      : a(d * d), grad(d * d * d), chol(d * d), force(d), drift(d), xi(d), v_old(d) {}
  std::vector<double> a, grad, chol, force, drift, xi, v_old;
};

void cholesky_into(const std::vector<double>& a, int d, std::vector<double>& L, const double* v) {
  std::fill(L.begin(), L.end(), 0.0);
  for (int j = 0; j < d; ++j) {
    double s = a[j * d + j];
    for (int k = 0; k < j; ++k) s -= L[j * d + k] * L[j * d + k];
    if (s < -1e-12 * std::abs(a[j * d + j]) || !std::isfinite(s))
      throw EllipticityViolation("diffusion matrix is not positive semidefinite", std::vector<double>(v, v + d),
                                 static_cast<std::size_t>(j));
    const double pivot = std::sqrt(std::max(s, 0.0));
    L[j * d + j] = pivot;
    for (int i = j + 1; i < d; ++i) {
      double t = a[i * d + j];
      for (int k = 0; k < j; ++k) t -= L[i * d + k] * L[j * d + k];
      L[i * d + j] = pivot > 0.0 ? t / pivot : 0.0;
    }
  }
}

struct StepContext {
  const ModelSpec& model;
  const NoiseSource& noise;
  int d;
  double dt;
  double sqrt_2dt;
  Integrator integrator;
  double noise_scale;
};

// Advances one path by one step; optionally accumulates covariation sums.
void path_step(const StepContext& c, double* s, std::size_t p, std::uint64_t step_index, double t_after,
               Workspace& w, CovariationRecorder* rec) {
  const int d = c.d;
  double* x = s;
  double* v = s + d;
  for (int k = 0; k < d; ++k) x[k] += v[k] * c.dt;

  const std::span<const double> vs(v, d);
  c.model.diffusion().eval_into(vs, w.a);
  c.model.diffusion().grad_into(vs, w.grad);
  c.model.potential().grad_into(std::span<const double>(x, d), w.force);
  c.noise.normals(p, step_index, w.xi);
  cholesky_into(w.a, d, w.chol, v);

  for (int i = 0; i < d; ++i) {
    double b = 0.0;
    for (int j = 0; j < d; ++j) b += w.grad[(j * d + i) * d + j] - w.a[i * d + j] * v[j];
    w.drift[i] = b - w.force[i];
  }
  for (int i = 0; i < d; ++i) w.v_old[i] = v[i];
  for (int i = 0; i < d; ++i) {
    double diffusion = 0.0;
    for (int j = 0; j <= i; ++j) diffusion += w.chol[i * d + j] * w.xi[j];
    double dv = w.drift[i] * c.dt + c.noise_scale * c.sqrt_2dt * diffusion;
    if (c.integrator == Integrator::Milstein)
      dv += c.noise_scale * c.noise_scale * 0.5 * w.grad[0] * c.dt * (w.xi[0] * w.xi[0] - 1.0);
    v[i] = w.v_old[i] + dv;
  }
  for (int k = 0; k < 2 * d; ++k)
    if (!std::isfinite(s[k])) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "non-finite state on path %zu at t = %.6g", p, t_after);
      throw BlowUpError(buf, p, t_after);
    }

  if (rec) {
    double* m = rec->martingale(p);
    double* r = rec->raw(p);
    double* q = rec->compensator(p);
    for (int i = 0; i < d; ++i) {
      const double dvi = v[i] - w.v_old[i];
      const double dmi = dvi - w.drift[i] * c.dt;
      for (int j = 0; j < d; ++j) {
        const double dvj = v[j] - w.v_old[j];
        const double dmj = dvj - w.drift[j] * c.dt;
        m[i * d + j] += dmi * dmj;
        r[i * d + j] += dvi * dvj;
        q[i * d + j] += 2.0 * w.a[i * d + j] * c.dt;
      }
    }
  }
}

using Observable = std::function<double(std::span<const double>, std::span<const double>)>;

std::vector<double> evaluate(const Ensemble& e, const Observable& g) {
  std::vector<double> out(e.n_paths);
  for (std::size_t p = 0; p < e.n_paths; ++p) {
    const double* s = e.path(p);
    out[p] = g(std::span<const double>(s, e.dim), std::span<const double>(s + e.dim, e.dim));
  }
  return out;
}

void put_u64(std::ostream& out, std::uint64_t value) {
  unsigned char bytes[8];
  for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>(value >> (8 * k));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw Error("truncated snapshot");
  std::uint64_t value = 0;
  for (int k = 0; k < 8; ++k) value |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
  return value;
}

}  // namespace

std::string to_string(Integrator integrator) {
  return integrator == Integrator::Milstein ? "milstein" : "euler-maruyama";
}

Integrator parse_integrator(const std::string& name) {
  if (name == "euler-maruyama") return Integrator::EulerMaruyama;
  if (name == "milstein") return Integrator::Milstein;
  throw UsageError("unknown integrator '" + name + "' (expected euler-maruyama or milstein)");
}

void PhiloxNoise::normals(std::uint64_t path, std::uint64_t step, std::span<double> out) const {
  const Philox4x32::Key key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
  std::uint64_t current = std::numeric_limits<std::uint64_t>::max();
  Philox4x32::Counter block{};
  for (std::size_t k = 0; k < out.size(); ++k) {
    const std::uint64_t n = step * out.size() + k;
    if (n / 4 != current) {
      current = n / 4;
      block = Philox4x32::generate({static_cast<std::uint32_t>(current), static_cast<std::uint32_t>(current >> 32),
                                    static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)},
                                   key);
    }
    out[k] = box_muller_lane(block, static_cast<int>(n % 4));
  }
}

AggregatedNoise::AggregatedNoise(const NoiseSource& fine, int factor) : fine_(fine), factor_(factor) {
  if (factor < 1) throw UsageError("aggregation factor must be at least 1");
}

void AggregatedNoise::normals(std::uint64_t path, std::uint64_t step, std::span<double> out) const {
  std::vector<double> buf(out.size());
  std::fill(out.begin(), out.end(), 0.0);
  for (int r = 0; r < factor_; ++r) {
    fine_.normals(path, step * factor_ + r, buf);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += buf[k];
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(factor_));
  for (auto& z : out) z *= scale;
}

Ensemble make_ensemble(const ModelSpec& model, std::size_t n_paths, std::uint64_t seed, Integrator integrator,
                       const Vector& x0, const Vector& v0) {
  if (n_paths < 1) throw UsageError("ensemble needs at least one path");
  const int d = model.dim();
  if (integrator == Integrator::Milstein && d != 1) throw UsageError("Milstein is only available for d = 1");
  if ((x0.size() != 0 && x0.size() != d) || (v0.size() != 0 && v0.size() != d))
    throw UsageError("initial point has the wrong dimension");
  Ensemble e;
  e.n_paths = n_paths;
  e.dim = d;
  e.seed = seed;
  e.integrator = integrator;
  e.state.assign(n_paths * 2 * d, 0.0);
  for (std::size_t p = 0; p < n_paths; ++p) {
    double* s = e.path(p);
    for (int k = 0; k < d; ++k) {
      if (x0.size()) s[k] = x0[k];
      if (v0.size()) s[d + k] = v0[k];
    }
  }
  return e;
}

CovariationRecorder::CovariationRecorder(std::size_t n_paths, int dim)
    : n_paths_(n_paths),
      dim_(dim),
      martingale_(n_paths * dim * dim, 0.0),
      raw_(n_paths * dim * dim, 0.0),
      compensator_(n_paths * dim * dim, 0.0) {}

void CovariationRecorder::advanced(std::uint64_t steps, double dt) {
  steps_ += steps;
  elapsed_ += static_cast<double>(steps) * dt;
}

void step(Ensemble& ensemble, const ModelSpec& model, double dt, const NoiseSource& noise, int threads) {
  advance(ensemble, model, dt, 1, noise, threads);
}

void advance(Ensemble& ensemble, const ModelSpec& model, double dt, std::uint64_t n_steps, const NoiseSource& noise,
             int threads, CovariationRecorder* recorder) {
  if (!(dt > 0.0)) throw UsageError("dt must be positive");
  if (model.dim() != ensemble.dim) throw UsageError("model and ensemble dimensions differ");
  if (recorder && (recorder->n_paths() != ensemble.n_paths || recorder->dim() != ensemble.dim))
    throw UsageError("recorder does not match the ensemble");
  const StepContext c{model, noise, ensemble.dim, dt, std::sqrt(2.0 * dt), ensemble.integrator, ensemble.noise_scale};
  const std::uint64_t first = ensemble.steps;
  const double t0 = ensemble.time;
  parallel_for(ensemble.n_paths, threads, [&](std::size_t begin, std::size_t end) {
    Workspace w(c.d);
    for (std::size_t p = begin; p < end; ++p) {
      double* s = ensemble.path(p);
      for (std::uint64_t k = 0; k < n_steps; ++k)
        path_step(c, s, p, first + k, t0 + static_cast<double>(k + 1) * dt, w, recorder);
    }
  });
  ensemble.steps += n_steps;
  ensemble.time = t0 + static_cast<double>(n_steps) * dt;
  if (recorder) recorder->advanced(n_steps, dt);
}

Estimate mean_and_se(const std::vector<double>& values) {
  if (values.empty()) throw UsageError("no samples");
  const double n = static_cast<double>(values.size());
  Estimate e;
  e.mean = pairwise_sum(values) / n;
  if (values.size() < 2) return e;
  std::vector<double> sq(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) sq[k] = (values[k] - e.mean) * (values[k] - e.mean);
  e.se = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
  return e;
}

Estimate ensemble_mean(const Ensemble& ensemble, const Observable& g) { return mean_and_se(evaluate(ensemble, g)); }

std::vector<NamedEstimate> stationary_moments(const Ensemble& ensemble, std::optional<double> x_second_moment) {
  auto moment = [&](const char* name, auto fn, std::optional<double> expected) {
    NamedEstimate m;
    m.name = name;
    m.estimate = ensemble_mean(ensemble, [&](std::span<const double> x, std::span<const double> v) { return fn(x, v); });
    if (expected) {
      m.expected = *expected;
      m.has_expected = true;
    }
    return m;
  };
  std::vector<NamedEstimate> out;
  out.push_back(moment("E[x]", [](auto x, auto) { return x[0]; }, std::nullopt));
  out.push_back(moment("E[v]", [](auto, auto v) { return v[0]; }, 0.0));
  out.push_back(moment("E[x^2]", [](auto x, auto) { return x[0] * x[0]; }, x_second_moment));
  out.push_back(moment("E[v^2]", [](auto, auto v) { return v[0] * v[0]; }, 1.0));
  out.push_back(moment("E[xv]", [](auto x, auto v) { return x[0] * v[0]; }, 0.0));
  return out;
}

CovariationEstimate quadratic_covariation(const CovariationRecorder& recorder, int i, int j) {
  if (recorder.steps() == 0) throw UsageError("no increments recorded");
  const int d = recorder.dim();
  if (i < 0 || j < 0 || i >= d || j >= d) throw UsageError("covariation index out of range");
  const std::size_t n = recorder.n_paths();
  std::vector<double> m(n), r(n), q(n), diff(n);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t k = p * d * d + i * d + j;
    m[p] = recorder.martingale()[k];
    r[p] = recorder.raw()[k];
    q[p] = recorder.compensator()[k];
    diff[p] = m[p] - q[p];
  }
  CovariationEstimate e;
  e.i = i;
  e.j = j;
  e.t = recorder.elapsed();
  e.realized = mean_and_se(m);
  e.raw = mean_and_se(r);
  e.compensator = mean_and_se(q);
  e.difference = mean_and_se(diff);
  return e;
}

bool MixingCurve::within_envelope(double k) const {
  for (std::size_t n = 0; n < lags.size(); ++n)
    if (std::abs(autocovariance[n]) > envelope[n] + k * se[n]) return false;
  return true;
}

MixingCurve mixing_curve(Ensemble& ensemble, const ModelSpec& model, const Observable& g,
                         const std::vector<double>& lags, double dt, const NoiseSource& noise, double theta1,
                         double theta2, std::string label, int threads) {
  if (lags.empty()) throw UsageError("no lags requested");
  if (ensemble.n_paths < 2) throw UsageError("autocovariance needs at least two paths");
  std::vector<std::uint64_t> lag_steps;
  for (std::size_t k = 0; k < lags.size(); ++k) {
    const double steps = lags[k] / dt;
    const double rounded = std::round(steps);
    if (lags[k] < 0.0 || std::abs(steps - rounded) > 1e-9 * std::max(1.0, steps))
      throw UsageError("lags must be nonnegative multiples of dt");
    if (k > 0 && lags[k] <= lags[k - 1]) throw UsageError("lags must be increasing");
    lag_steps.push_back(static_cast<std::uint64_t>(rounded));
  }

  MixingCurve c;
  c.label = std::move(label);
  c.lags = lags;
  c.theta1 = theta1;
  c.theta2 = theta2;
  const std::vector<double> g0 = evaluate(ensemble, g);
  const Estimate m0 = mean_and_se(g0);
  std::vector<double> centred0(g0.size());
  for (std::size_t p = 0; p < g0.size(); ++p) centred0[p] = g0[p] - m0.mean;
  {
    std::vector<double> sq(g0.size());
    for (std::size_t p = 0; p < g0.size(); ++p) sq[p] = centred0[p] * centred0[p];
    c.variance = mean_and_se(sq);
  }

  std::uint64_t done = 0;
  for (std::uint64_t target : lag_steps) {
    if (target > done) advance(ensemble, model, dt, target - done, noise, threads);
    done = target;
    const std::vector<double> gt = evaluate(ensemble, g);
    const double mt = pairwise_sum(gt) / static_cast<double>(gt.size());
    std::vector<double> prod(gt.size());
    for (std::size_t p = 0; p < gt.size(); ++p) prod[p] = centred0[p] * (gt[p] - mt);
    const Estimate cov = mean_and_se(prod);
    c.autocovariance.push_back(cov.mean);
    c.se.push_back(cov.se);
    c.envelope.push_back(theta1 * std::exp(-theta2 * static_cast<double>(target) * dt) * c.variance.mean);
  }

  std::vector<double> ts, ns;
  for (std::size_t k = 0; k < lags.size(); ++k)
    if (std::abs(c.autocovariance[k]) > 5.0 * c.se[k]) {
      ts.push_back(lags[k]);
      ns.push_back(std::abs(c.autocovariance[k]));
    }
  if (ts.size() >= 2) c.fit = fit_envelope_rate(ts, ns, ts.front(), ts.back(), 0.0);
  return c;
}

void write_mixing_csv(const MixingCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path);
  out << "lag,autocovariance,se,envelope\n";
  char line[128];
  for (std::size_t k = 0; k < curve.lags.size(); ++k) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", curve.lags[k], curve.autocovariance[k],
                  curve.se[k], curve.envelope[k]);
    out << line;
  }
  if (!out) throw Error("write failed for " + path);
}

WeakOrderStudy weak_order_study(const ModelSpec& model, std::size_t n_paths, std::uint64_t seed, double t,
                                const std::vector<double>& dts, double reference_dt, const Observable& g,
                                const Vector& x0, const Vector& v0, Integrator integrator, int threads) {
  if (dts.empty() || !(reference_dt > 0.0) || !(t > 0.0)) throw UsageError("weak-order study needs dt values and t > 0");
  const PhiloxNoise fine(seed);
  auto run = [&](double dt, const NoiseSource& noise) {
    const double steps = t / dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * steps) throw UsageError("t must be a multiple of every dt");
    Ensemble e = make_ensemble(model, n_paths, seed, integrator, x0, v0);
    advance(e, model, dt, static_cast<std::uint64_t>(std::round(steps)), noise, threads);
    return evaluate(e, g);
  };
  const std::vector<double> ref = run(reference_dt, fine);
  WeakOrderStudy s;
  s.dts = dts;
  s.reference = mean_and_se(ref);
  for (double dt : dts) {
    const double ratio = dt / reference_dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || ratio < 1.0)
      throw UsageError("every dt must be an integer multiple of the reference dt");
    const AggregatedNoise coarse(fine, static_cast<int>(std::round(ratio)));
    const std::vector<double> vals = run(dt, coarse);
    std::vector<double> diff(vals.size());
    for (std::size_t p = 0; p < vals.size(); ++p) diff[p] = vals[p] - ref[p];
    s.errors.push_back(mean_and_se(diff));
  }
  for (std::size_t k = 1; k < s.errors.size(); ++k)
    s.orders.push_back(std::log2(std::abs(s.errors[k - 1].mean) / std::abs(s.errors[k].mean)) /
                       std::log2(dts[k - 1] / dts[k]));
  return s;
}

void write_snapshot(const Ensemble& ensemble, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path);
  put_u64(out, ensemble.n_paths);
  put_u64(out, static_cast<std::uint64_t>(ensemble.dim));
  put_u64(out, std::bit_cast<std::uint64_t>(ensemble.time));
  put_u64(out, ensemble.seed);
  for (double x : ensemble.state) put_u64(out, std::bit_cast<std::uint64_t>(x));
  if (!out) throw Error("write failed for " + path);
}

Ensemble read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  Ensemble e;
  e.n_paths = get_u64(in);
  e.dim = static_cast<int>(get_u64(in));
  e.time = std::bit_cast<double>(get_u64(in));
  e.seed = get_u64(in);
  if (e.dim < 1 || e.n_paths < 1 || e.n_paths > (std::uint64_t{1} << 40)) throw Error("corrupt snapshot header");
  e.state.resize(e.n_paths * 2 * e.dim);
  for (auto& x : e.state) x = std::bit_cast<double>(get_u64(in));
  return e;
}

}  // namespace hypocert
