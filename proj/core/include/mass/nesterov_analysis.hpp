#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace mass::nesterov {

using Matrix4 = Eigen::Matrix4d;
using Vector4 = Eigen::Vector4d;

/// Second-moment transition operator of SGD+Nesterov on one coordinate of the
/// component decoupled model. It propagates the vectorized moment
/// E[(e_{t+1}, e_t) (x) (e_{t+1}, e_t)], ordered (e_{t+1}^2, e_{t+1} e_t, e_t e_{t+1}, e_t^2).
struct SecondMomentOperator {
  Matrix4 matrix;
  double step = 0.0;      // t_j = eta * sigma_j^2
  double gamma = 0.0;     // momentum
  double momentum_gap() const noexcept { return 1.0 - gamma; }  // u
  /// (1 - t)^2 + 5 t^2: the second moment of 1 - eta x_j^2.
  double second_moment_factor() const noexcept { return (1.0 - step) * (1.0 - step) + 5.0 * step * step; }
};

SecondMomentOperator transition_matrix(double sigma_sq, double eta, double gamma);

/// Coefficients c0..c4 of the characteristic polynomial sum c_k lambda^k.
std::array<double, 5> characteristic_polynomial(const SecondMomentOperator& op);

/// All four eigenvalues from a dense eigensolver. Throws on solver failure.
std::array<std::complex<double>, 4> eigenvalues(const SecondMomentOperator& op);

/// max |lambda| over the spectrum.
double top_eigenvalue_magnitude(const SecondMomentOperator& op);

/// Step-size threshold eta_0(u) above which B^[1] has an eigenvalue > 1.
/// Defined for 0 < u < 1 (sigma_1^2 normalized to 1).
double step_size_threshold(double u);

enum class Verdict { converges, diverges };
std::string_view to_string(Verdict v);

struct BehaviorPrediction {
  Verdict verdict = Verdict::converges;
  double lambda_max_1 = 0.0;
  double lambda_max_2 = 0.0;
  /// 1 or 2: the component with the largest top eigenvalue.
  int dominant_component = 1;
  /// Per-iteration second-moment rate; meaningful when converging.
  double rate() const noexcept { return std::max(lambda_max_1, lambda_max_2); }
};

/// Eigenvalues within this margin above 1 still count as non-divergent.
inline constexpr double kDivergenceMargin = 1e-12;

BehaviorPrediction predict_behavior(double sigma1_sq, double sigma2_sq, double eta, double gamma);

/// det(M') from the non-degeneracy argument, as a closed form in t = eta sigma^2
/// and u = 1 - gamma.
double det_M_prime(double t, double u);

struct SecondMomentEstimate {
  /// phi[t] is the Monte-Carlo mean of the vectorized moment at time t.
  std::vector<Vector4> mean;
  std::vector<Vector4> standard_error;
  /// One-step residual phi_hat[t+1] - B phi_hat[t] averaged per run, and its
  /// standard error, so the recursion can be tested against sampling noise.
  std::vector<Vector4> bridge_residual;
  std::vector<Vector4> bridge_standard_error;
};

/// Simulates e_{t+1} = (1 - eta x^2)((1 + gamma) e_t - gamma e_{t-1}) with
/// x^2 = sigma^2 z^2 (z ~ N(0, 2)) w.p. 1/2 and 0 otherwise, starting from
/// e_0 = e_{-1} = w0_offset.
SecondMomentEstimate monte_carlo_second_moment(double sigma_sq, double eta, double gamma, double w0_offset,
                                               std::size_t t_max, std::size_t n_runs, std::uint64_t seed);

struct PhaseRow {
  double u = 0.0;
  double eta = 0.0;
  double lambda_max_1 = 0.0;
  double lambda_max_2 = 0.0;
  Verdict verdict = Verdict::converges;
};

std::vector<PhaseRow> phase_diagram(double sigma1_sq, double sigma2_sq, const std::vector<double>& u_grid,
                                    const std::vector<double>& eta_grid);

/// Columns `u,eta,lambda_max_1,lambda_max_2,verdict`.
void write_phase_csv(const std::vector<PhaseRow>& rows, const std::filesystem::path& path);

/// Bisection for the step size where lambda_max(B^[1]) crosses 1, with sigma^2 = 1.
double divergence_onset(double u, double lo, double hi, double tol = 1e-12);

}  // namespace mass::nesterov
