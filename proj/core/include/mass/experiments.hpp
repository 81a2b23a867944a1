#pragma once

#include "mass/optim.hpp"
#include "mass/problem.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mass::experiments {

inline constexpr std::size_t kDefaultMaxIters = 1'000'000;
inline constexpr double kDefaultTargetRatio = 1e-6;

/// Baseline hyper-parameter grid. Cells are (eta, gamma) pairs; SGD only uses
/// the eta axis.
struct GridSpec {
  std::vector<double> eta_grid;
  std::vector<double> gamma_grid;
  std::size_t repeats = 5;

  void validate() const;
};

/// eta log-spaced on [1e-4, 1] (25 points), gamma in {0, .5, .8, .9, .95, .99}.
GridSpec default_grid();
std::vector<double> log_space(double lo, double hi, std::size_t points);

/// Median of per-seed iteration counts; failures count as +infinity.
double median_iterations(const std::vector<std::optional<std::size_t>>& counts);

enum class Status { reached, not_reached, diverged };
std::string_view to_string(Status s);

struct CellResult {
  Method method = Method::sgd;
  HyperParamsPractical params;
  std::vector<std::optional<std::size_t>> iterations;  // per repeat
  std::size_t diverged_runs = 0;
  double median = 0.0;  // +inf when the median run failed
};

struct MethodResult {
  Method method = Method::sgd;
  HyperParamsPractical params;
  Status status = Status::not_reached;
  double median_iterations = 0.0;
  std::size_t cells_tried = 0;
};

struct ComparisonConfig {
  BatchSize batch = BatchSize::of(1);
  LossTarget target = LossTarget::relative(kDefaultTargetRatio);
  GridSpec grid = default_grid();
  std::uint64_t seed = 0;
  std::size_t max_iters = kDefaultMaxIters;
  std::size_t jobs = 0;
};

struct ComparisonResult {
  std::vector<MethodResult> methods;  // sgd, nesterov, heavy_ball, mass
  std::vector<CellResult> cells;
  SpectralProfile profile;

  const MethodResult& best(Method m) const;
};

/// Grid-best SGD, SGD+Nesterov and SGD+Heavy-Ball against untuned MaSS.
/// Repeat r of every cell uses seed derive_seed(seed, r), so each method sees
/// the same initial points.
ComparisonResult compare_optimizers(const LinearProblem& problem, const ComparisonConfig& config);

void write_comparison_csv(const ComparisonResult& result, const std::filesystem::path& path);

struct RegimeRow {
  std::size_t m = 1;
  double s_m = 0.0;           // 1 / median iterations; 0 if unreached
  double theory_speed = 0.0;  // 1 / sqrt(kappa_m kappa~_m)
  double median_iterations = 0.0;
  OptimalHyperParams params;
  bool reached = false;
};

struct RegimeReport {
  std::vector<RegimeRow> rows;
  double m1_star = 0.0;
  double m2_star = 0.0;
  bool population_constants = false;

  const RegimeRow& row(std::size_t m) const;
};

struct RegimeConfig {
  std::vector<std::size_t> m_list;
  LossTarget target = LossTarget::relative(kDefaultTargetRatio);
  std::uint64_t seed = 0;
  std::size_t repeats = 9;
  std::size_t max_iters = kDefaultMaxIters;
  std::size_t jobs = 0;
};

/// m1* = min(L1/L, kappa~), m2* = max(L1/L, kappa~).
std::pair<double, double> critical_batch_sizes(double L, double L1, double kappa_tilde);

/// MaSS with optimal_hyperparams(profile, m) for each m. Hyper-parameters use
/// the empirical profile; critical sizes use population constants when the
/// generator supplied them.
RegimeReport regime_sweep(const LinearProblem& problem, const RegimeConfig& config);

void write_regime_csv(const RegimeReport& report, const std::filesystem::path& path);

struct LinearScalingReport {
  bool holds = false;
  double eta_ratio = 0.0;    // eta*(km) / (k eta*(m))
  double alpha_ratio = 0.0;
  double delta_ratio = 0.0;
};

/// Whether optimal_hyperparams(km) is within 15% of k * optimal_hyperparams(m)
/// in every component.
LinearScalingReport linear_scaling_check(const SpectralProfile& profile, std::size_t m, std::size_t k);

struct LyapunovRow {
  std::size_t t = 0;
  double mean_ratio = 0.0;  // mean over seeds of F_{t+1} / F_t
  double standard_error = 0.0;
  double bound = 0.0;       // 1 - alpha
  bool holds = false;
};

struct LyapunovConfig {
  BatchSize batch = BatchSize::of(1);
  std::size_t t_max = 200;
  std::size_t n_seeds = 200;
  std::uint64_t seed = 0;
  std::optional<Vector> initial_point;
};

/// Runs analytic-form MaSS and checks E[F_{t+1}/F_t] <= 1 - alpha + 3 SE at
/// each t. With a full batch the check is exact up to 1e-12 rounding.
std::vector<LyapunovRow> lyapunov_suite(const LinearProblem& problem, const HyperParamsAnalytic& params,
                                        const LyapunovConfig& config);

struct AvrRow {
  double radius = 0.0;
  double measured = 0.0;  // trace of the sampled gradient covariance
  double standard_error = 0.0;
  double bound = 0.0;     // radius^2 tr E[(H~_m - H)^2]
  bool holds = false;
};

/// Gradient variance at w* + r * xi for a fixed random unit direction xi in range(H).
std::vector<AvrRow> avr_suite(const LinearProblem& problem, const std::vector<double>& radii,
                              std::size_t n_samples, std::uint64_t seed, std::size_t m = 1);

/// Least-squares slope of log(loss) against iteration over records with
/// iteration >= from; non-positive losses are skipped.
double fit_log_loss_slope(const Trajectory& t, std::size_t from = 0);

/// Ordered `key = value` reproducibility record.
class Manifest {
 public:
  void set(std::string key, std::string value);
  void set(std::string key, double value);
  void set(std::string key, std::uint64_t value);
  void add_profile(const std::string& prefix, const SpectralProfile& p);
  void write(const std::filesystem::path& path) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace mass::experiments
