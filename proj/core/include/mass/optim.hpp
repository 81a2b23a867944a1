#pragma once

#include "mass/problem.hpp"
#include "mass/random.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mass {

/// (eta1, eta2, gamma): step size, compensation coefficient, momentum.
struct HyperParamsPractical {
  double eta1 = 0.0;
  double eta2 = 0.0;
  double gamma = 0.0;
};

/// (eta, alpha, delta): step size, averaging weight, secondary step size.
struct HyperParamsAnalytic {
  double eta = 0.0;
  double alpha = 1.0;
  double delta = 0.0;
};

HyperParamsAnalytic to_analytic(const HyperParamsPractical& p);
HyperParamsPractical to_practical(const HyperParamsAnalytic& p);

struct OptimalHyperParams {
  HyperParamsAnalytic analytic;
  HyperParamsPractical practical;
};

/// eta = 1/L_m, alpha = 1/sqrt(kappa_m kappa~_m), delta = eta / (alpha kappa~_m).
/// The practical triple is evaluated in closed form, which makes eta2 exactly
/// zero in the full-batch limit.
OptimalHyperParams optimal_hyperparams(const SpectralProfile& profile, BatchSize m);

struct ConvergenceReport {
  bool satisfied = false;
  /// alpha/delta - mu; must be <= 0.
  double slack_averaging = 0.0;
  /// alpha delta kappa~_m + eta (eta L_m - 2); must be <= 0.
  double slack_step = 0.0;
};

/// Both slacks are accepted up to 1e-12 relative rounding.
ConvergenceReport check_convergence_conditions(const HyperParamsAnalytic& p, const SpectralProfile& profile,
                                               BatchSize m);

/// (1/m) sum_{i in batch} (x_i^T w - y_i) x_i, written into `out`.
void stochastic_gradient(const LinearProblem& problem, const Vector& w, std::span<const std::size_t> batch,
                         Vector& out);
Vector stochastic_gradient(const LinearProblem& problem, const Vector& w, std::span<const std::size_t> batch);

struct OptimizerState {
  Vector w;
  Vector u;
  Vector v;
  Vector w_prev;
  std::size_t iteration = 0;

  static OptimizerState at(const Vector& w0) { return {w0, w0, w0, w0, 0}; }
};

// Each step consumes the gradient at the point its method evaluates
// (u for MaSS/Nesterov, w for SGD/Heavy-Ball) and advances the state in place.

void step_mass_analytic(OptimizerState& s, const Vector& grad_at_u, const HyperParamsAnalytic& p);
void step_mass_practical(OptimizerState& s, const Vector& grad_at_u, const HyperParamsPractical& p);
void step_sgd(OptimizerState& s, const Vector& grad, double eta);
void step_nesterov(OptimizerState& s, const Vector& grad_at_u, double eta, double gamma);
void step_heavy_ball(OptimizerState& s, const Vector& grad_at_w, double eta, double gamma);

enum class Method { sgd, nesterov, heavy_ball, mass };
enum class MassForm { practical, analytic };
/// with_replacement is what the analysis assumes; without_replacement draws
/// from reshuffled epochs and is off-theory; full_batch uses the exact gradient.
enum class Sampling { with_replacement, without_replacement, full_batch };

std::string_view to_string(Method m);
Method parse_method(std::string_view text);
std::string_view to_string(Sampling s);
Sampling parse_sampling(std::string_view text);

/// Stopping target, either an absolute loss or a fraction of the initial loss.
class LossTarget {
 public:
  static LossTarget absolute(double loss) { return {loss, false}; }
  static LossTarget relative(double ratio) { return {ratio, true}; }
  double resolve(double initial_loss) const { return relative_ ? value_ * initial_loss : value_; }
  double value() const noexcept { return value_; }
  bool is_relative() const noexcept { return relative_; }

 private:
  LossTarget(double v, bool r) : value_(v), relative_(r) {}
  double value_;
  bool relative_;
};

struct RunSpec {
  Method method = Method::sgd;
  HyperParamsPractical params;
  MassForm mass_form = MassForm::practical;
};

struct RunOptions {
  std::size_t batch_size = 1;
  Sampling sampling = Sampling::with_replacement;
  std::size_t max_iters = 1000;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  std::optional<LossTarget> target;
  /// Default: w0 ~ N(0, I) drawn from the run seed.
  std::optional<Vector> initial_point;
  /// When false only the first and last records are kept; stopping is still
  /// checked every eval_every iterations.
  bool keep_records = true;
};

struct TrajectoryRecord {
  std::size_t iteration = 0;
  double loss = 0.0;
  std::optional<double> dist_sq;
  std::optional<double> lyapunov;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  bool diverged = false;
  bool reached_target = false;
  RunSpec spec;
  RunOptions options;

  double initial_loss() const { return records.front().loss; }
  const TrajectoryRecord& last() const { return records.back(); }
  /// Iteration of the final record when the target was reached.
  std::optional<std::size_t> iterations_to_target() const;
};

/// Loss above kDivergenceFactor * (initial loss + 1), or non-finite, halts a run.
inline constexpr double kDivergenceFactor = 1e8;

void validate(const RunSpec& spec);

/// Runs with solution-side quantities recomputed from the problem.
Trajectory run(const LinearProblem& problem, const RunSpec& spec, const RunOptions& options);
/// `reference` may be null when the problem is not interpolable.
Trajectory run(const LinearProblem& problem, const Reference* reference, const RunSpec& spec,
               const RunOptions& options);

/// Lyapunov value ||v - w*||^2_{H^+} + (delta/alpha) ||w - w*||^2.
double lyapunov_value(const Reference& ref, const Vector& w, const Vector& v, const HyperParamsAnalytic& p);

/// Columns `iteration,loss,dist_sq,lyapunov`; absent values are empty cells.
void write_trajectory_csv(const Trajectory& t, const std::filesystem::path& path);
/// Flat `key = value` sidecar describing how the trajectory was produced.
void write_trajectory_metadata(const Trajectory& t, const std::filesystem::path& path);

}  // namespace mass
