#include "hypocert/serialize.hpp"

#include <cmath>

namespace hypocert {

namespace {

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json vec(const Vector& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(num(v[k]));
  return a;
}

json vec(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

json mat(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(Vector(m.row(i).transpose())));
  return rows;
}

template <class T>
json opt(const std::optional<T>& value) {
  return value ? json(*value) : json(nullptr);
}

}  // namespace

void to_json(json& j, const ProbeBox& box) { j = {{"lower", vec(box.lower)}, {"upper", vec(box.upper)}}; }

void to_json(json& j, const Witnessed& w) { j = {{"value", num(w.value)}, {"witness", vec(w.witness)}}; }

void to_json(json& j, const BBoundResult& b) {
  j = {{"values", mat(b.values)}, {"N_sigma", num(b.N_sigma)}, {"max_value", num(b.max_value)},
       {"slack", num(b.slack)},   {"order", b.order}};
}

void to_json(json& j, const ConditionFlag& f) {
  j = {{"name", f.name}, {"status", f.status}, {"detail", f.detail}};
  j["witness"] = f.witness ? vec(*f.witness) : json(nullptr);
}

void to_json(json& j, const AssumptionReport& r) {
  j = {{"model", r.model},
       {"dim", r.dim},
       {"sigma_box", r.sigma_box},
       {"potential_box", r.potential_box},
       {"n_probes", r.n_probes},
       {"c_sigma", num(r.c_sigma)},
       {"c_sigma_witness", vec(r.c_sigma_witness)},
       {"M_sigma", num(r.M_sigma)},
       {"B_sigma", num(r.B_sigma)},
       {"N_sigma", num(r.N_sigma)},
       {"regime", to_string(r.regime)},
       {"beta", num(r.beta)},
       {"M_growth", num(r.M_growth)},
       {"fitted_M", num(r.fitted_M)},
       {"lambda", num(r.lambda_poincare)},
       {"lambda_method", r.lambda_method},
       {"c_hess", num(r.c_hess)},
       {"N_gradgrowth", num(r.N_gradgrowth)},
       {"gamma", num(r.gamma)},
       {"b_bound", r.b_bound},
       {"flags", r.flags},
       {"all_passed", r.all_passed()}};
}

void to_json(json& j, const CertificateInputs& in) {
  j = {{"c_sigma", num(in.c_sigma)}, {"N_sigma", num(in.N_sigma)}, {"lambda", num(in.lambda)},
       {"c_phi", num(in.c_phi)},     {"dim", in.dim},               {"theta1", num(in.theta1)},
       {"provenance", in.provenance}};
}

void to_json(json& j, const RateCertificate& c) {
  j = {{"inputs", c.inputs},     {"d_sigma", num(c.d_sigma)}, {"delta", num(c.delta)},
       {"s_phi", num(c.s_phi)},  {"r_phi", num(c.r_phi)},     {"a1", num(c.a1)},
       {"a2", num(c.a2)},        {"a3", num(c.a3)},           {"n1", num(c.n1)},
       {"n2", num(c.n2)},        {"n3", num(c.n3)},           {"eps_tilde", num(c.eps_tilde)},
       {"eps", num(c.eps)},      {"kappa", num(c.kappa)},     {"kappa1", num(c.kappa1)},
       {"kappa2", num(c.kappa2)}, {"theta1", num(c.inputs.theta1)}, {"theta2", num(c.theta2)}};
}

void to_json(json& j, const RateCondition& c) {
  j = {{"lambda_m", num(c.lambda_m)},
       {"lambda_M", num(c.lambda_M)},
       {"left_coefficient", num(c.left_coefficient)},
       {"right_coefficient", num(c.right_coefficient)},
       {"left_margin", num(c.left_margin)},
       {"right_margin", num(c.right_margin)},
       {"satisfied", c.satisfied}};
}

void to_json(json& j, const PhaseBox& b) {
  j = {{"x_min", num(b.x_min)}, {"x_max", num(b.x_max)}, {"v_min", num(b.v_min)}, {"v_max", num(b.v_max)}};
}

void to_json(json& j, const DissipativityResult& r) {
  j = {{"max_lff", num(r.max_lff)},
       {"max_abs_aff", num(r.max_abs_aff)},
       {"max_abs_invariance", num(r.max_abs_invariance)},
       {"passed", r.passed},
       {"samples", r.samples}};
}

void to_json(json& j, const InequalityResult& r) {
  j = {{"extreme", num(r.extreme)}, {"bound", num(r.bound)}, {"passed", r.passed}, {"samples", r.samples}};
}

void to_json(json& j, const SpectralGap& g) {
  j = {{"gap", num(g.gap)},
       {"eigenvalue", {num(g.eigenvalue.real()), num(g.eigenvalue.imag())}},
       {"method", g.method},
       {"converged", g.converged}};
}

void to_json(json& j, const OperatorStageResult& r) {
  j = {{"nx", r.nx},
       {"nv", r.nv},
       {"box", r.box},
       {"dissipativity", r.dissipativity},
       {"microscopic", r.microscopic},
       {"macroscopic", r.macroscopic},
       {"bs_bound", r.bs_bound},
       {"max_abs_L1", num(r.max_abs_L1)},
       {"spectral_gap", r.gap},
       {"exported", r.exported}};
}

void to_json(json& j, const RateFit& f) {
  j = {{"rate", num(f.rate)}, {"prefactor", num(f.prefactor)}, {"points", f.points}};
}

void to_json(json& j, const DecayCurve& c) {
  j = {{"label", c.label},
       {"times", vec(c.times)},
       {"norms", vec(c.norms)},
       {"envelope", vec(c.envelope)},
       {"equilibrium_mean", num(c.equilibrium_mean)},
       {"theta1", num(c.theta1)},
       {"theta2", num(c.theta2)},
       {"window", {num(c.window_start), num(c.window_end)}},
       {"fitted_rate", num(c.fit.rate)},
       {"fitted_prefactor", num(c.fit.prefactor)},
       {"fit_points", c.fit.points},
       {"margin", num(c.fit.rate - c.theta2)},
       {"max_increase", num(c.max_increase())},
       {"max_envelope_ratio", num(c.max_envelope_ratio())},
       {"monotone", c.monotone()},
       {"within_envelope", c.within_envelope()},
       {"rate_certified", c.rate_certified()}};
}

void to_json(json& j, const FokkerPlanckSummary& s) {
  j = {{"curve", s.curve},
       {"initial_mass", num(s.initial_mass)},
       {"max_mass_drift", num(s.max_mass_drift)},
       {"min_density", num(s.min_density)},
       {"warnings", s.warnings}};
}

void to_json(json& j, const OrnsteinUhlenbeckOracle& o) {
  j = {{"drift", mat(o.drift)}, {"gap", num(o.gap)}, {"curve", o.curve}};
}

void to_json(json& j, const Estimate& e) { j = {{"mean", num(e.mean)}, {"se", num(e.se)}}; }

void to_json(json& j, const NamedEstimate& e) {
  j = {{"name", e.name}, {"mean", num(e.estimate.mean)}, {"se", num(e.estimate.se)}};
  if (e.has_expected) {
    j["expected"] = num(e.expected);
    j["z"] = e.estimate.se > 0.0 ? num((e.estimate.mean - e.expected) / e.estimate.se) : json(nullptr);
    j["within_3se"] = e.within(3.0);
  } else {
    j["expected"] = nullptr;
  }
}

void to_json(json& j, const CovariationEstimate& e) {
  j = {{"i", e.i},
       {"j", e.j},
       {"t", num(e.t)},
       {"realized", e.realized},
       {"raw", e.raw},
       {"compensator", e.compensator},
       {"difference", e.difference},
       {"consistent_3se", e.consistent(3.0)}};
}

void to_json(json& j, const MixingCurve& c) {
  j = {{"label", c.label},
       {"lags", vec(c.lags)},
       {"autocovariance", vec(c.autocovariance)},
       {"se", vec(c.se)},
       {"envelope", vec(c.envelope)},
       {"variance", c.variance},
       {"theta1", num(c.theta1)},
       {"theta2", num(c.theta2)},
       {"fitted_rate", num(c.fit.rate)},
       {"fitted_prefactor", num(c.fit.prefactor)},
       {"fit_points", c.fit.points},
       {"within_envelope", c.within_envelope(3.0)}};
}

void to_json(json& j, const SdeStageResult& r) {
  j = {{"n_paths", r.n_paths},
       {"dt", num(r.dt)},
       {"burn_in", num(r.burn_in)},
       {"seed", r.seed},
       {"integrator", to_string(r.integrator)},
       {"moments", r.moments},
       {"covariations", r.covariations},
       {"mixing", r.mixing},
       {"integrated_autocorrelation_time", num(r.integrated_autocorrelation_time)},
       {"effective_sample_size", num(r.effective_sample_size)}};
}

void to_json(json& j, const ExperimentConfig& c) {
  json stages = json::array();
  for (Stage s : c.stages) stages.push_back(to_string(s));
  j = {{"schema", kConfigSchema},
       {"model", {{"name", c.model}, {"params", c.model_params}}},
       {"grid", {{"nx", c.nx}, {"nv", c.nv}}},
       {"time", {{"t_end", num(c.t_end)}, {"dt", num(c.dt)}, {"scheme", to_string(c.scheme)}}},
       {"operators", {{"test_functions", c.test_functions}, {"export", c.export_operators}}},
       {"sde",
        {{"paths", c.paths},
         {"dt", num(c.sde_dt)},
         {"burn_in", num(c.burn_in)},
         {"seed", c.seed},
         {"integrator", to_string(c.integrator)},
         {"max_lag", num(c.max_lag)},
         {"covariation_time", num(c.covariation_time)}}},
       {"certify",
        {{"theta1", num(c.theta1)},
         {"c_phi", num(c.c_phi)},
         {"c_sigma", opt(c.c_sigma)},
         {"N_sigma", opt(c.N_sigma)},
         {"lambda", opt(c.lambda)}}},
       {"run", {{"stages", stages}, {"threads", c.threads}, {"out", opt(c.out)}}}};
}

void to_json(json& j, const Check& c) {
  j = {{"stage", c.stage}, {"name", c.name}, {"passed", c.passed}, {"detail", c.detail}};
}

void to_json(json& j, const ReportBundle& r) {
  json stages = json::array();
  for (Stage s : r.stages_run) stages.push_back(to_string(s));
  json failures = json::array();
  for (const auto& c : r.failures()) failures.push_back(c.stage + "/" + c.name);
  j = {{"version", kVersion},
       {"verdict", r.passed() ? "PASS" : "FAIL"},
       {"failures", failures},
       {"config", r.config},
       {"stages_run", stages},
       {"grid_built", r.grid_built},
       {"checks", r.checks},
       {"notes", r.notes},
       {"timings", r.timings}};
  if (r.assumptions) j["assumptions"] = *r.assumptions;
  if (r.certificate) j["certificate"] = *r.certificate;
  if (r.rate_condition) j["rate_condition"] = *r.rate_condition;
  if (r.operators) j["operators"] = *r.operators;
  if (!r.decay_curves.empty()) j["decay_curves"] = r.decay_curves;
  if (r.fokker_planck) j["fokker_planck"] = *r.fokker_planck;
  if (r.ou_oracle) j["ou_oracle"] = *r.ou_oracle;
  if (r.sde) j["sde"] = *r.sde;
  const auto gap = r.measured_gap();
  j["measured_gap"] = gap ? num(*gap) : json(nullptr);
  j["margin"] = gap && r.certificate ? num(*gap - r.certificate->theta2) : json(nullptr);
}

}  // namespace hypocert
