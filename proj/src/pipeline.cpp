#include "hypocert/pipeline.hpp"

#include "hypocert/errors.hpp"
#include "hypocert/serialize.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace hypocert {

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::vector<Stage> resolve_stages(const ExperimentConfig& config, std::vector<std::string>& notes) {
  std::set<Stage> wanted(config.stages.begin(), config.stages.end());
  const bool downstream =
      wanted.count(Stage::Operators) || wanted.count(Stage::Semigroup) || wanted.count(Stage::Sde);
  if (downstream && !wanted.count(Stage::Certify)) {
    wanted.insert(Stage::Certify);
    notes.push_back("certify added: operators, semigroup and sde compare against the certificate");
  }
  const bool constants_given = config.c_sigma && config.N_sigma && config.lambda;
  if (wanted.count(Stage::Certify) && !constants_given && !wanted.count(Stage::Assumptions)) {
    wanted.insert(Stage::Assumptions);
    notes.push_back("assumptions added: certify needs c_sigma, N_sigma and lambda");
  }
  std::vector<Stage> out;
  for (Stage s : all_stages())
    if (wanted.count(s)) out.push_back(s);
  return out;
}

// Quadratic Φ and constant Σ, checked at a few points.
bool is_ornstein_uhlenbeck(const ModelSpec& model) {
  const int d = model.dim();
  const Vector zero = Vector::Zero(d);
  const Matrix H0 = model.potential().hessian(zero);
  const Matrix A0 = model.diffusion().matrix(zero);
  for (double s : {0.7, -1.3, 2.1}) {
    Vector p = Vector::Constant(d, s);
    p[0] = -0.5 * s;
    if ((model.potential().hessian(p) - H0).norm() > 1e-8 * (1.0 + H0.norm())) return false;
    if ((model.diffusion().matrix(p) - A0).norm() > 1e-12 * (1.0 + A0.norm())) return false;
    if (model.potential().gradient(zero).norm() > 1e-10) return false;
  }
  return true;
}

std::optional<double> stationary_x_second_moment(const ModelSpec& model) {
  if (model.dim() == 1) {
    const Potential& phi = model.potential();
    const double half = phi.truncation_halfwidth(50.0);
    auto f = [&](double x) {
      const double xs[1] = {x};
      return x * x * std::exp(-phi.value(std::span<const double>(xs, 1)));
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -half, half, 15, 1e-13);
  }
  if (is_ornstein_uhlenbeck(model)) {
    const Matrix H = model.potential().hessian(Vector::Zero(model.dim()));
    return H.inverse()(0, 0);
  }
  return std::nullopt;
}

DecayCurve make_curve(std::string label, const std::vector<double>& times, const std::vector<double>& norms,
                      double theta1, double theta2, double t_end) {
  DecayCurve c;
  c.label = std::move(label);
  c.times = times;
  c.norms = norms;
  c.theta1 = theta1;
  c.theta2 = theta2;
  for (double t : times) c.envelope.push_back(theta1 * std::exp(-theta2 * t) * norms.front());
  c.window_start = t_end / 5.0;
  c.window_end = t_end;
  c.fit = fit_envelope_rate(c.times, c.norms, c.window_start, c.window_end);
  return c;
}

void add_curve_checks(ReportBundle& r, const std::string& stage, const DecayCurve& c) {
  r.checks.push_back({stage, c.label + ".monotone", c.monotone(), "max increase " + fmt(c.max_increase())});
  r.checks.push_back({stage, c.label + ".envelope", c.within_envelope(),
                      "max norm/envelope " + fmt(c.max_envelope_ratio())});
  r.checks.push_back({stage, c.label + ".rate", c.rate_certified(),
                      "fitted " + fmt(c.fit.rate) + " vs theta2 " + fmt(c.theta2)});
}

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

struct GridContext {
  std::optional<PhaseGrid> grid;
  std::optional<DiscreteOperator> L;
};

const PhaseGrid& ensure_grid(ReportBundle& r, GridContext& ctx, const ModelSpec& model) {
  if (!ctx.grid) {
    ctx.grid = build_grid(model, r.config.nx, r.config.nv, default_box(model));
    r.grid_built = true;
  }
  return *ctx.grid;
}

const DiscreteOperator& ensure_L(ReportBundle& r, GridContext& ctx, const ModelSpec& model) {
  const PhaseGrid& grid = ensure_grid(r, ctx, model);
  if (!ctx.L) ctx.L = assemble(model, grid, OperatorKind::L, r.config.threads);
  return *ctx.L;
}

void run_assumptions(ReportBundle& r, const ModelSpec& model) {
  AssumptionOptions opt;
  opt.threads = r.config.threads;
  opt.lambda_override = r.config.lambda;
  r.assumptions = build_assumption_report(model, opt);
  for (const auto& flag : r.assumptions->flags)
    r.checks.push_back({"assumptions", flag.name, flag.passed(), flag.status + (flag.detail.empty() ? "" : ": " + flag.detail)});
}

void run_certify(ReportBundle& r, const ModelSpec& model) {
  CertificateInputs in;
  in.dim = model.dim();
  in.theta1 = r.config.theta1;
  in.c_phi = r.config.c_phi;
  std::vector<std::string> sources;
  auto pick = [&](const std::optional<double>& given, double measured, const char* name) {
    if (given) {
      sources.push_back(std::string(name) + "=config");
      return *given;
    }
    if (!r.assumptions) throw UsageError(std::string("no value for ") + name);
    sources.push_back(std::string(name) + "=assumptions");
    return measured;
  };
  in.c_sigma = pick(r.config.c_sigma, r.assumptions ? r.assumptions->c_sigma : 0.0, "c_sigma");
  in.N_sigma = pick(r.config.N_sigma, r.assumptions ? r.assumptions->N_sigma : 0.0, "N_sigma");
  in.lambda = pick(r.config.lambda, r.assumptions ? r.assumptions->lambda_poincare : 0.0, "lambda");
  std::string provenance = model.name() + ":";
  for (std::size_t k = 0; k < sources.size(); ++k) provenance += (k ? "," : "") + sources[k];
  in.provenance = provenance;
  r.certificate = certify(in);
  r.rate_condition = check_rate_condition(*r.certificate, in.c_sigma, in.lambda);
  r.checks.push_back({"certify", "rate_condition", r.rate_condition->satisfied,
                      "left margin " + fmt(r.rate_condition->left_margin) + ", right margin " +
                          fmt(r.rate_condition->right_margin)});
}

void run_operators(ReportBundle& r, GridContext& ctx, const ModelSpec& model, const std::string& export_dir,
                   const std::function<void(const std::string&)>& log) {
  const RateCertificate& cert = *r.certificate;
  const CertificateInputs& in = cert.inputs;

  try {
    const BBoundResult b = verify_b_bound(model.diffusion(), in.N_sigma);
    r.checks.push_back({"operators", "b_bound", true, "max " + fmt(b.max_value) + " <= N_sigma " + fmt(in.N_sigma)});
  } catch (const AssumptionFailure& e) {
    r.checks.push_back({"operators", "b_bound", false, e.what()});
  }

  if (model.dim() != 1) {
    r.notes.push_back("operators: discrete generator tests need d = 1; gap taken from the drift-matrix oracle");
    if (is_ornstein_uhlenbeck(model)) {
      EvolveOptions opt{r.config.t_end, r.config.dt, r.config.scheme, 10};
      if (!r.ou_oracle) r.ou_oracle = ou_oracle(model, opt, in.theta1, cert.theta2);
      r.checks.push_back({"operators", "gap_above_theta2", r.ou_oracle->gap > cert.theta2,
                          "oracle gap " + fmt(r.ou_oracle->gap) + " vs theta2 " + fmt(cert.theta2)});
    }
    return;
  }

  const PhaseGrid& grid = ensure_grid(r, ctx, model);
  const int threads = r.config.threads;
  const DiscreteOperator& L = ensure_L(r, ctx, model);
  const DiscreteOperator A = assemble(model, grid, OperatorKind::A, threads);
  const DiscreteOperator S = assemble(model, grid, OperatorKind::S, threads);
  const DiscreteOperator PS = assemble(model, grid, OperatorKind::P_S, threads);
  const DiscreteOperator P = assemble(model, grid, OperatorKind::P, threads);
  const DiscreteOperator G = assemble(model, grid, OperatorKind::G, threads);
  const auto fs = random_test_vectors(grid, static_cast<std::size_t>(r.config.test_functions), r.config.seed);

  OperatorStageResult out;
  out.nx = grid.nx;
  out.nv = grid.nv;
  out.box = grid.box;
  out.dissipativity = test_dissipativity(L, A, grid, fs);
  out.microscopic = test_microscopic_coercivity(S, PS, grid, fs, in.c_sigma);
  out.macroscopic = test_macroscopic_coercivity(A, P, grid, fs, in.lambda);
  out.bs_bound = test_bs_bound(model, grid, G, PS, fs, in.N_sigma);
  out.max_abs_L1 = L.apply(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(grid.size()))).cwiseAbs().maxCoeff();
  if (log) log("operators: spectral gap");
  out.gap = spectral_gap(L, grid);

  if (r.config.export_operators) {
    std::filesystem::create_directories(export_dir);
    const std::vector<std::pair<std::string, const DiscreteOperator*>> ops = {
        {"L", &L}, {"A", &A}, {"S", &S}, {"P_S", &PS}, {"G", &G}};
    for (const auto& [name, op] : ops) {
      const std::string path = (std::filesystem::path(export_dir) / ("operator_" + name + ".mtx")).string();
      export_triplets(*op, path);
      out.exported.push_back(path);
    }
  }

  const auto& d = out.dissipativity;
  r.checks.push_back({"operators", "dissipativity", d.passed,
                      "max (Lf,f)/|f|^2 " + fmt(d.max_lff) + ", max |(Lf,1)|/|f| " + fmt(d.max_abs_invariance)});
  r.checks.push_back({"operators", "invariance_L1", out.max_abs_L1 <= 1e-8, "max |L1| " + fmt(out.max_abs_L1)});
  r.checks.push_back({"operators", "microscopic", out.microscopic.passed,
                      "min ratio " + fmt(out.microscopic.extreme) + " vs c_sigma " + fmt(in.c_sigma)});
  r.checks.push_back({"operators", "macroscopic", out.macroscopic.passed,
                      "min ratio " + fmt(out.macroscopic.extreme) + " vs lambda " + fmt(in.lambda)});
  r.checks.push_back({"operators", "bs_bound", out.bs_bound.passed,
                      "max ratio " + fmt(out.bs_bound.extreme) + " vs bound " + fmt(out.bs_bound.bound)});
  r.checks.push_back({"operators", "gap_above_theta2", out.gap.gap > cert.theta2,
                      "gap " + fmt(out.gap.gap) + " vs theta2 " + fmt(cert.theta2)});
  r.operators = std::move(out);
}

void run_semigroup(ReportBundle& r, GridContext& ctx, const ModelSpec& model,
                   const std::function<void(const std::string&)>& log) {
  const RateCertificate& cert = *r.certificate;
  const double theta1 = cert.inputs.theta1;
  const double theta2 = cert.theta2;
  const EvolveOptions opt{r.config.t_end, r.config.dt, r.config.scheme, 10};

  if (is_ornstein_uhlenbeck(model)) {
    if (!r.ou_oracle) r.ou_oracle = ou_oracle(model, opt, theta1, theta2);
    const DecayCurve& c = r.ou_oracle->curve;
    r.checks.push_back({"semigroup", "ou_oracle.envelope", c.within_envelope(),
                        "max norm/envelope " + fmt(c.max_envelope_ratio())});
  }
  if (model.dim() != 1) {
    r.notes.push_back("semigroup: PDE evolution needs d = 1; decay taken from the drift-matrix oracle");
    if (!r.ou_oracle) throw UsageError("semigroup: no decay evidence for a d > 1 model without an OU oracle");
    return;
  }

  const PhaseGrid& grid = ensure_grid(r, ctx, model);
  const DiscreteOperator& L = ensure_L(r, ctx, model);

  std::vector<Eigen::VectorXd> observables = {
      grid.sample([](double x, double) { return x; }),
      grid.sample([](double, double v) { return v; }),
      grid.sample([](double x, double v) { return x * x + v; }),
  };
  std::vector<std::string> labels = {"x", "v", "x2_plus_v"};
  const auto smooth = random_test_vectors(grid, 2, r.config.seed + 1);
  for (std::size_t k = 0; k < smooth.size(); ++k) {
    observables.push_back(smooth[k]);
    labels.push_back("smooth" + std::to_string(k));
  }
  if (log) log("semigroup: backward Kolmogorov curves");
  r.decay_curves = decay_curves(L, grid, observables, labels, opt, theta1, theta2, r.config.threads);

  const DiscreteOperator Ls = assemble(model, grid, OperatorKind::L_star, r.config.threads);
  r.decay_curves.push_back(decay_curve(Ls, grid, observables[0], opt, theta1, theta2, "x_adjoint"));
  for (const auto& c : r.decay_curves) add_curve_checks(r, "semigroup", c);

  if (log) log("semigroup: Fokker-Planck");
  const DiscreteOperator FP = assemble(model, grid, OperatorKind::L_FP, r.config.threads);
  FokkerPlanckRun run = evolve_fokker_planck(FP, grid, tilted_density(grid, 1.0, 0.5), opt, theta1, theta2);
  run.curve.label = "fokker_planck";
  FokkerPlanckSummary s;
  s.curve = std::move(run.curve);
  s.initial_mass = run.initial_mass;
  s.max_mass_drift = run.max_mass_drift;
  s.min_density = run.min_density;
  s.warnings = std::move(run.warnings);
  add_curve_checks(r, "semigroup", s.curve);
  r.checks.push_back({"semigroup", "fokker_planck.mass", s.max_mass_drift <= 1e-8,
                      "max mass drift " + fmt(s.max_mass_drift)});
  r.fokker_planck = std::move(s);
}

void run_sde(ReportBundle& r, const ModelSpec& model, const std::function<void(const std::string&)>& log) {
  const ExperimentConfig& c = r.config;
  const RateCertificate& cert = *r.certificate;
  const double dt = c.sde_dt;
  const PhiloxNoise noise(c.seed);
  Ensemble e = make_ensemble(model, c.paths, c.seed, c.integrator);

  if (log) log("sde: burn-in");
  advance(e, model, dt, static_cast<std::uint64_t>(std::llround(c.burn_in / dt)), noise, c.threads);

  SdeStageResult out;
  out.n_paths = c.paths;
  out.dt = dt;
  out.burn_in = c.burn_in;
  out.seed = c.seed;
  out.integrator = c.integrator;
  out.moments = stationary_moments(e, stationary_x_second_moment(model));
  out.effective_sample_size = static_cast<double>(c.paths);

  if (log) log("sde: quadratic covariation");
  const int d = model.dim();
  CovariationRecorder rec(c.paths, d);
  advance(e, model, dt, std::max<std::uint64_t>(1, std::llround(c.covariation_time / dt)), noise, c.threads, &rec);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) out.covariations.push_back(quadratic_covariation(rec, i, j));

  if (log) log("sde: autocovariance");
  const std::int64_t stride = std::max<std::int64_t>(1, std::llround(0.1 / dt));
  std::vector<double> lags;
  for (std::int64_t k = 0; static_cast<double>(k * stride) * dt <= c.max_lag * (1.0 + 1e-12); ++k)
    lags.push_back(static_cast<double>(k * stride) * dt);
  out.mixing = mixing_curve(
      e, model, [](std::span<const double> x, std::span<const double>) { return x[0]; }, lags, dt, noise,
      cert.inputs.theta1, cert.theta2, "x", c.threads);

  // ∫ρ(t)dt up to the first non-positive autocorrelation
  const auto& acov = out.mixing.autocovariance;
  double tau = 0.0;
  for (std::size_t k = 1; k < acov.size() && acov[k] > 0.0 && acov[0] > 0.0; ++k)
    tau += 0.5 * (acov[k - 1] + acov[k]) / acov[0] * (lags[k] - lags[k - 1]);
  out.integrated_autocorrelation_time = tau;

  for (const auto& m : out.moments) {
    if (!m.has_expected) continue;
    const double z = m.estimate.se > 0.0 ? (m.estimate.mean - m.expected) / m.estimate.se : 0.0;
    r.checks.push_back({"sde", "moment " + m.name, m.within(3.0),
                        fmt(m.estimate.mean) + " +- " + fmt(m.estimate.se) + " vs " + fmt(m.expected) + " (z " +
                            fmt(z) + ")"});
  }
  for (const auto& q : out.covariations) {
    r.checks.push_back({"sde", "covariation " + std::to_string(q.i) + std::to_string(q.j), q.consistent(3.0),
                        "realized - compensator " + fmt(q.difference.mean) + " +- " + fmt(q.difference.se)});
  }
  r.checks.push_back({"sde", "autocovariance.envelope", out.mixing.within_envelope(3.0),
                      "fitted rate " + fmt(out.mixing.fit.rate) + " vs theta2 " + fmt(cert.theta2)});
  r.sde = std::move(out);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string());
  out << text;
  out.close();
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

bool ReportBundle::passed() const { return failures().empty(); }

std::vector<Check> ReportBundle::failures() const {
  std::vector<Check> out;
  for (const auto& c : checks)
    if (!c.passed) out.push_back(c);
  return out;
}

std::optional<double> ReportBundle::measured_gap() const {
  if (operators) return operators->gap.gap;
  if (ou_oracle) return ou_oracle->gap;
  return std::nullopt;
}

OrnsteinUhlenbeckOracle ou_oracle(const ModelSpec& model, const EvolveOptions& options, double theta1,
                                  double theta2) {
  if (!is_ornstein_uhlenbeck(model)) throw UsageError("model '" + model.name() + "' is not Ornstein-Uhlenbeck");
  const int d = model.dim();
  const Matrix H = model.potential().hessian(Vector::Zero(d));
  const Matrix Sigma = model.diffusion().matrix(Vector::Zero(d));
  const Matrix root = Eigen::SelfAdjointEigenSolver<Matrix>(H).operatorSqrt();

  OrnsteinUhlenbeckOracle o;
  o.drift = Matrix::Zero(2 * d, 2 * d);
  o.drift.topRightCorner(d, d) = root;
  o.drift.bottomLeftCorner(d, d) = -root;
  o.drift.bottomRightCorner(d, d) = -Sigma;
  const Eigen::VectorXcd eig = o.drift.eigenvalues();
  o.gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < eig.size(); ++k) o.gap = std::min(o.gap, -eig[k].real());

  const double step = options.dt * options.record_every;
  const auto n = static_cast<std::size_t>(std::llround(options.t_end / step));
  std::vector<double> times, norms;
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * step;
    const Matrix E = (t * o.drift).exp();
    times.push_back(t);
    norms.push_back(Eigen::JacobiSVD<Matrix>(E).singularValues()[0]);
  }
  o.curve = make_curve("ou_oracle", times, norms, theta1, theta2, options.t_end);
  return o;
}

ReportBundle run(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  ReportBundle r;
  r.config = config;
  r.stages_run = resolve_stages(config, r.notes);
  const auto& log = options.log;
  const ModelSpec model = make_model(config.model, config.model_params);
  GridContext ctx;

  for (Stage stage : r.stages_run) {
    const std::string name = to_string(stage);
    if (log) log("stage " + name);
    const Timer timer;
    try {
      if (stage != Stage::Assumptions && stage != Stage::Certify && !r.certificate)
        throw Error("no certificate available");
      switch (stage) {
        case Stage::Assumptions: run_assumptions(r, model); break;
        case Stage::Certify: run_certify(r, model); break;
        case Stage::Operators: run_operators(r, ctx, model, options.export_dir, log); break;
        case Stage::Semigroup: run_semigroup(r, ctx, model, log); break;
        case Stage::Sde: run_sde(r, model, log); break;
      }
    } catch (const std::exception& e) {
      r.checks.push_back({name, "error", false, e.what()});
    }
    r.timings[name] = timer.seconds();
    if (log) log("stage " + name + " done in " + fmt(r.timings[name]) + " s");
  }
  return r;
}

std::string summary_table(const ReportBundle& r) {
  auto row = [](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      char buf[64];
      std::snprintf(buf, sizeof buf, k == 0 ? "%-14s" : " %13s", cells[k].c_str());
      line += buf;
    }
    return line + "\n";
  };
  std::string out = row({"model", "c_sigma", "N_sigma", "lambda", "theta2", "gap", "margin"});
  if (r.stages_run.empty()) return out;
  auto cell = [](std::optional<double> x) { return x ? fmt(*x) : std::string("-"); };
  std::optional<double> c_sigma, N_sigma, lambda, theta2;
  if (r.certificate) {
    c_sigma = r.certificate->inputs.c_sigma;
    N_sigma = r.certificate->inputs.N_sigma;
    lambda = r.certificate->inputs.lambda;
    theta2 = r.certificate->theta2;
  } else if (r.assumptions) {
    c_sigma = r.assumptions->c_sigma;
    N_sigma = r.assumptions->N_sigma;
    lambda = r.assumptions->lambda_poincare;
  }
  const auto gap = r.measured_gap();
  std::optional<double> margin;
  if (gap && theta2) margin = *gap - *theta2;
  out += row({r.config.model, cell(c_sigma), cell(N_sigma), cell(lambda), cell(theta2), cell(gap), cell(margin)});
  return out;
}

std::vector<std::string> emit(const ReportBundle& r, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory '" + dir + "'");
  const fs::path root(dir);
  std::vector<std::string> written;

  write_text(root / "report.json", json(r).dump(2) + "\n");
  written.push_back((root / "report.json").string());
  write_text(root / "summary.txt", summary_table(r));
  written.push_back((root / "summary.txt").string());

  for (const auto& c : r.decay_curves) {
    const fs::path p = root / ("decay_" + c.label + ".csv");
    write_decay_csv(c, p.string());
    written.push_back(p.string());
  }
  if (r.fokker_planck) {
    const fs::path p = root / "fokker_planck.csv";
    write_decay_csv(r.fokker_planck->curve, p.string());
    written.push_back(p.string());
  }
  if (r.ou_oracle) {
    const fs::path p = root / "ou_oracle.csv";
    write_decay_csv(r.ou_oracle->curve, p.string());
    written.push_back(p.string());
  }
  if (r.sde) {
    const fs::path p = root / ("autocovariance_" + r.sde->mixing.label + ".csv");
    write_mixing_csv(r.sde->mixing, p.string());
    written.push_back(p.string());
  }
  return written;
}

}  // namespace hypocert
