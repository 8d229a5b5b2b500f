#pragma once

#include "hypocert/model.hpp"
#include "hypocert/semigroup.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hypocert {

enum class Integrator { EulerMaruyama, Milstein };

std::string to_string(Integrator integrator);
/// Accepts "euler-maruyama" and "milstein".
Integrator parse_integrator(const std::string& name);

/// Standard normals indexed by (path, step, component).
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual void normals(std::uint64_t path, std::uint64_t step, std::span<double> out) const = 0;
};

/// Philox4x32-10 keyed by the seed; normal number n = step·d + k of a path is
/// lane n mod 4 of the Box–Muller block with counter (n/4, path).
class PhiloxNoise final : public NoiseSource {
 public:
  explicit PhiloxNoise(std::uint64_t seed) : seed_(seed) {}
  void normals(std::uint64_t path, std::uint64_t step, std::span<double> out) const override;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

/// Coarse-step noise built from `factor` consecutive fine normals, summed and
/// divided by √factor; couples runs at different dt to one Brownian path.
class AggregatedNoise final : public NoiseSource {
 public:
  AggregatedNoise(const NoiseSource& fine, int factor);
  void normals(std::uint64_t path, std::uint64_t step, std::span<double> out) const override;

 private:
  const NoiseSource& fine_;
  int factor_;
};

/// n_paths copies of (x, v) ∈ ℝ²ᵈ, stored row-major as [x₁..x_d, v₁..v_d].
struct Ensemble {
  std::size_t n_paths = 0;
  int dim = 1;
  std::vector<double> state;
  double time = 0.0;
  std::uint64_t steps = 0;  // steps taken; indexes the noise stream
  std::uint64_t seed = 0;
  Integrator integrator = Integrator::EulerMaruyama;
  double noise_scale = 1.0;  // 0 switches the Brownian term off

  double* path(std::size_t p) { return state.data() + p * 2 * dim; }
  const double* path(std::size_t p) const { return state.data() + p * 2 * dim; }
};

/// Every path starts at (x0, v0); zero vectors when omitted.
Ensemble make_ensemble(const ModelSpec& model, std::size_t n_paths, std::uint64_t seed,
                       Integrator integrator = Integrator::EulerMaruyama, const Vector& x0 = Vector(),
                       const Vector& v0 = Vector());

/// Per-path running sums for the quadratic covariation of V.
class CovariationRecorder {
 public:
  CovariationRecorder(std::size_t n_paths, int dim);

  std::size_t n_paths() const { return n_paths_; }
  int dim() const { return dim_; }
  std::uint64_t steps() const { return steps_; }
  double elapsed() const { return elapsed_; }

  // (ΔMⁱΔMʲ, ΔVⁱΔVʲ, 2aᵢⱼΔt) accumulated for one path and step
  double* martingale(std::size_t p) { return martingale_.data() + p * dim_ * dim_; }
  double* raw(std::size_t p) { return raw_.data() + p * dim_ * dim_; }
  double* compensator(std::size_t p) { return compensator_.data() + p * dim_ * dim_; }
  const std::vector<double>& martingale() const { return martingale_; }
  const std::vector<double>& raw() const { return raw_; }
  const std::vector<double>& compensator() const { return compensator_; }
  void advanced(std::uint64_t steps, double dt);

 private:
  std::size_t n_paths_;
  int dim_;
  std::uint64_t steps_ = 0;
  double elapsed_ = 0.0;
  std::vector<double> martingale_, raw_, compensator_;
};

/// One step of the scheme for every path:
///   x ← x + v·dt
///   v ← v + (b(v) − ∇Φ(x))·dt + √(2dt)·σ(v)ξ [+ ½a′(v)dt(ξ² − 1), Milstein, d = 1]
/// The force is evaluated at the updated position. Throws BlowUpError on a
/// non-finite state.
void step(Ensemble& ensemble, const ModelSpec& model, double dt, const NoiseSource& noise, int threads = 1);

/// n_steps steps; paths run independently (path-major) so the result does not
/// depend on `threads`.
void advance(Ensemble& ensemble, const ModelSpec& model, double dt, std::uint64_t n_steps, const NoiseSource& noise,
             int threads = 1, CovariationRecorder* recorder = nullptr);

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

/// Sample mean and standard error, fixed-order pairwise sums.
Estimate mean_and_se(const std::vector<double>& values);

/// Mean of g(x, v) over the paths.
Estimate ensemble_mean(const Ensemble& ensemble,
                       const std::function<double(std::span<const double>, std::span<const double>)>& g);

struct NamedEstimate {
  std::string name;
  Estimate estimate;
  double expected = 0.0;
  bool has_expected = false;

  /// |mean − expected| ≤ k·SE.
  bool within(double k = 3.0) const {
    return !has_expected || std::abs(estimate.mean - expected) <= k * estimate.se;
  }
};

/// E[x₁], E[v₁], E[x₁²], E[v₁²], E[x₁v₁]; the expected value of E[x₁²] is
/// attached when `x_second_moment` is given.
std::vector<NamedEstimate> stationary_moments(const Ensemble& ensemble,
                                              std::optional<double> x_second_moment = std::nullopt);

struct CovariationEstimate {
  int i = 0;
  int j = 0;
  double t = 0.0;
  Estimate realized;      // Σ ΔMⁱΔMʲ with M the martingale part of V
  Estimate raw;           // Σ ΔVⁱΔVʲ, includes the O(dt) drift contribution
  Estimate compensator;   // 2∫aᵢⱼ(V_s)ds, left-point sums on the same paths
  Estimate difference;    // realized − compensator, per path

  bool consistent(double k = 3.0) const { return std::abs(difference.mean) <= k * difference.se; }
};

/// Throws UsageError when nothing was recorded.
CovariationEstimate quadratic_covariation(const CovariationRecorder& recorder, int i, int j);

struct MixingCurve {
  std::string label;
  std::vector<double> lags;
  std::vector<double> autocovariance;
  std::vector<double> se;
  std::vector<double> envelope;  // θ₁e^{−θ₂t}·Var(g)
  Estimate variance;
  double theta1 = 0.0;
  double theta2 = 0.0;
  RateFit fit;  // over the lags whose |Cov| exceeds 5 SE

  /// |Cov(t)| ≤ envelope(t) + k·SE at every lag.
  bool within_envelope(double k = 3.0) const;
};

/// Stationary autocovariance of g. The ensemble must already be equilibrated;
/// it is advanced to the largest lag. Lags must be nonnegative multiples of dt.
MixingCurve mixing_curve(Ensemble& ensemble, const ModelSpec& model,
                         const std::function<double(std::span<const double>, std::span<const double>)>& g,
                         const std::vector<double>& lags, double dt, const NoiseSource& noise, double theta1,
                         double theta2, std::string label = "g", int threads = 1);

/// CSV with columns lag,autocovariance,se,envelope.
void write_mixing_csv(const MixingCurve& curve, const std::string& path);

struct WeakOrderStudy {
  std::vector<double> dts;
  std::vector<Estimate> errors;  // E[g]_dt − E[g]_ref on shared Brownian paths
  std::vector<double> orders;    // log₂ of successive error ratios
  Estimate reference;
};

/// Runs the scheme at each dt (each an integer multiple of reference_dt) and
/// at reference_dt with coupled noise, all paths from (x0, v0) to time t.
WeakOrderStudy weak_order_study(const ModelSpec& model, std::size_t n_paths, std::uint64_t seed, double t,
                                const std::vector<double>& dts, double reference_dt,
                                const std::function<double(std::span<const double>, std::span<const double>)>& g,
                                const Vector& x0, const Vector& v0, Integrator integrator = Integrator::EulerMaruyama,
                                int threads = 1);

/// Binary snapshot, little-endian: u64 n_paths, u64 d, f64 t, u64 seed, then
/// the state as row-major f64. The step counter is not stored: a restored
/// ensemble draws its noise from step 0 again.
void write_snapshot(const Ensemble& ensemble, const std::string& path);
Ensemble read_snapshot(const std::string& path);

}  // namespace hypocert
