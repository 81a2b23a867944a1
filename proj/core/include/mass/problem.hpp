#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace mass {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Closed-form distribution-level constants, known when a problem comes from
/// one of the synthetic generators.
struct PopulationConstants {
  double L = 0.0;
  double mu = 0.0;
  double L1 = 0.0;
  double kappa_tilde = 0.0;
};

/// Least-squares dataset in the interpolation regime. Immutable after
/// construction; rows of `features()` are the samples x_i.
class LinearProblem {
 public:
  LinearProblem(Matrix features, Vector targets, std::optional<Vector> true_solution = std::nullopt,
                std::uint64_t seed = 0, std::optional<PopulationConstants> population = std::nullopt);

  const Matrix& features() const noexcept { return features_; }
  const Vector& targets() const noexcept { return targets_; }
  const std::optional<Vector>& true_solution() const noexcept { return true_solution_; }
  const std::optional<PopulationConstants>& population() const noexcept { return population_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::size_t samples() const noexcept { return static_cast<std::size_t>(features_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features_.cols()); }

 private:
  Matrix features_;
  Vector targets_;
  std::optional<Vector> true_solution_;
  std::uint64_t seed_;
  std::optional<PopulationConstants> population_;
};

/// Empirical spectral characterization of a problem's Hessian and its
/// fourth-moment bounds.
struct SpectralProfile {
  Eigen::MatrixXd hessian;
  double L = 0.0;
  double mu = 0.0;
  double L1 = 0.0;
  double kappa_tilde = 0.0;
  std::size_t rank = 0;

  double kappa() const noexcept { return L / mu; }
  double kappa1() const noexcept { return L1 / mu; }
};

/// Build a profile directly from constants (no Hessian attached). Used when
/// only the closed-form population values are of interest.
SpectralProfile profile_from_constants(const PopulationConstants& c);

/// Mini-batch size; `full()` is the m -> infinity limit (exact gradient).
class BatchSize {
 public:
  static BatchSize of(std::size_t m);
  static BatchSize full() noexcept { return BatchSize(0, true); }

  bool is_full() const noexcept { return full_; }
  std::size_t count() const;
  /// m as a real number; +inf for the full-batch limit.
  double value() const noexcept {
    return full_ ? std::numeric_limits<double>::infinity() : static_cast<double>(m_);
  }

 private:
  BatchSize(std::size_t m, bool full) : m_(m), full_(full) {}
  std::size_t m_;
  bool full_;
};

struct BatchConstants {
  double L_m = 0.0;
  double kappa_m = 0.0;
  double kappa_tilde_m = 0.0;
};

/// Component decoupled model: rows sigma1 * z * e1 or sigma2 * z * e2 with
/// probability 1/2 each, z ~ N(0, 2). Parameters are standard deviations.
LinearProblem gen_component_decoupled(double sigma1, double sigma2, std::size_t n, std::uint64_t seed);

/// Zero-mean Gaussian rows with diagonal covariance.
LinearProblem gen_gaussian(const Vector& cov_diagonal, std::size_t n, std::uint64_t seed);

/// Thrown by load_csv; carries the 1-based line number of the offending row.
class CsvParseError : public std::runtime_error {
 public:
  CsvParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Rows are `x_1,...,x_d,y`.
LinearProblem load_csv(const std::filesystem::path& path, bool has_header);
/// Writes a header line and 17 significant digits per cell.
void export_csv(const LinearProblem& problem, const std::filesystem::path& path);

/// Eigenvalues below this fraction of the largest are treated as zero.
inline constexpr double kRankTolerance = 1e-10;

SpectralProfile spectral_profile(const LinearProblem& problem);

BatchConstants batch_constants(const SpectralProfile& profile, BatchSize m);

/// Raised by min_norm_solution when the data admit no interpolating solution.
class NotInterpolable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// w* = H^+ (1/n) sum y_i x_i. Throws NotInterpolable if the residual check fails.
Vector min_norm_solution(const LinearProblem& problem);

/// 1/2 mean squared residual, evaluated directly over the samples.
double empirical_loss(const LinearProblem& problem, const Vector& w);

/// (1/n) X^T (X w - y).
Vector full_gradient(const LinearProblem& problem, const Vector& w);

/// Solution-side quantities shared by every run on one problem: the minimum
/// norm solution, the Hessian and its pseudo-inverse, and the projector onto
/// range(H). Lets loss and distances be evaluated in O(d^2) without
/// cancellation.
struct Reference {
  Vector solution;
  Eigen::MatrixXd hessian;
  Eigen::MatrixXd pinv;
  Eigen::MatrixXd projector;
  Vector grad_at_solution;  // H w* - b, zero up to rounding
  double loss_at_solution = 0.0;

  /// f(w) via the exact second-order expansion around w*.
  double loss(const Vector& w) const;
  /// ||P (w - w*)||^2.
  double dist_sq(const Vector& w) const;
  /// ||P (w - w*)||^2_{H^+}.
  double pinv_norm_sq(const Vector& w) const;
};

std::optional<Reference> make_reference(const LinearProblem& problem);

}  // namespace mass
