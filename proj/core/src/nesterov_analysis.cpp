#include "mass/nesterov_analysis.hpp"

#include "mass/csv.hpp"
#include "mass/random.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mass::nesterov {

SecondMomentOperator transition_matrix(double sigma_sq, double eta, double gamma) {
  if (!(sigma_sq > 0.0)) throw std::invalid_argument("sigma_sq must be positive");
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw std::invalid_argument("eta must be non-negative");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");

  SecondMomentOperator op;
  op.step = eta * sigma_sq;
  op.gamma = gamma;
  const double a = op.second_moment_factor();
  const double s = 1.0 - op.step;
  const double g = gamma;
  // clang-format off
  op.matrix <<
      (1 + g) * (1 + g) * a, -g * (1 + g) * a, -g * (1 + g) * a, g * g * a,
      (1 + g) * s,           0.0,              -g * s,           0.0,
      (1 + g) * s,           -g * s,           0.0,              0.0,
      1.0,                   0.0,              0.0,              0.0;
  // clang-format on
  return op;
}

std::array<double, 5> characteristic_polynomial(const SecondMomentOperator& op) {
  const double g = op.gamma;
  const double s = 1.0 - op.step;
  const double a = op.second_moment_factor();
  const double g2 = g * g;
  const double p2 = (1 + g) * (1 + g);
  return {g2 * g2 * s * s * a,
          -g2 * p2 * s * s * a,
          2.0 * g * p2 * s * a - g2 * s * s - g2 * a,
          -p2 * a,
          1.0};
}

std::array<std::complex<double>, 4> eigenvalues(const SecondMomentOperator& op) {
  if (!op.matrix.allFinite()) throw std::invalid_argument("transition matrix has non-finite entries");
  Eigen::EigenSolver<Matrix4> solver(op.matrix, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) throw std::runtime_error("4x4 eigensolver did not converge");
  std::array<std::complex<double>, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = solver.eigenvalues()(i);
  return out;
}

double top_eigenvalue_magnitude(const SecondMomentOperator& op) {
  double top = 0.0;
  for (const auto& l : eigenvalues(op)) top = std::max(top, std::abs(l));
  return top;
}

double step_size_threshold(double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("step_size_threshold needs 0 < u < 1");
  const double u2 = u * u;
  const double disc = 9.0 + 84.0 * u - 164.0 * u2 + 100.0 * u2 * u - 20.0 * u2 * u2;
  return (-3.0 - 2.0 * u + 2.0 * u2 + std::sqrt(disc)) / (2.0 * (9.0 - 15.0 * u + 6.0 * u2));
}

std::string_view to_string(Verdict v) { return v == Verdict::diverges ? "diverges" : "converges"; }

BehaviorPrediction predict_behavior(double sigma1_sq, double sigma2_sq, double eta, double gamma) {
  BehaviorPrediction p;
  p.lambda_max_1 = top_eigenvalue_magnitude(transition_matrix(sigma1_sq, eta, gamma));
  p.lambda_max_2 = top_eigenvalue_magnitude(transition_matrix(sigma2_sq, eta, gamma));
  p.dominant_component = p.lambda_max_2 > p.lambda_max_1 ? 2 : 1;
  p.verdict = (p.lambda_max_1 > 1.0 + kDivergenceMargin || p.lambda_max_2 > 1.0 + kDivergenceMargin)
                  ? Verdict::diverges
                  : Verdict::converges;
  return p;
}

double det_M_prime(double t, double u) {
  if (!(t > 0.0)) throw std::invalid_argument("det_M_prime needs t > 0");
  const double t2 = t * t;
  return 0.5 * (1.0 - u) * t2 * t *
         (36.0 * t2 - 18.0 * u * t2 + 6.0 * u * t + 3.0 * t - 3.0 * u + 1.0);
}

namespace {

/// Running mean and variance (Welford) for 4-vectors.
struct Moments {
  std::size_t count = 0;
  Vector4 mean = Vector4::Zero();
  Vector4 m2 = Vector4::Zero();

  void add(const Vector4& x) {
    ++count;
    const Vector4 delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta.cwiseProduct(x - mean);
  }
  Vector4 standard_error() const {
    if (count < 2) return Vector4::Zero();
    const double n = static_cast<double>(count);
    return (m2 / (n - 1.0) / n).cwiseSqrt();
  }
};

Vector4 outer(double now, double before) { return {now * now, now * before, before * now, before * before}; }

}  // namespace

SecondMomentEstimate monte_carlo_second_moment(double sigma_sq, double eta, double gamma, double w0_offset,
                                               std::size_t t_max, std::size_t n_runs, std::uint64_t seed) {
  if (n_runs < 100) throw std::invalid_argument("monte_carlo_second_moment needs n_runs >= 100");
  const SecondMomentOperator op = transition_matrix(sigma_sq, eta, gamma);

  std::vector<Moments> phi(t_max + 1), bridge(t_max);
  const double z_stddev = std::sqrt(2.0);
  Rng root(seed);
  for (std::size_t r = 0; r < n_runs; ++r) {
    Rng rng = root.split(r);
    double now = w0_offset, before = w0_offset;
    Vector4 current = outer(now, before);
    phi[0].add(current);
    for (std::size_t t = 0; t < t_max; ++t) {
      double x_sq = 0.0;
      const bool active = rng.uniform() < 0.5;
      const double z = rng.normal(0.0, z_stddev);
      if (active) x_sq = sigma_sq * z * z;
      const double next = (1.0 - eta * x_sq) * ((1.0 + gamma) * now - gamma * before);
      before = now;
      now = next;
      const Vector4 following = outer(now, before);
      phi[t + 1].add(following);
      bridge[t].add(following - op.matrix * current);
      current = following;
    }
  }

  SecondMomentEstimate est;
  for (const auto& m : phi) {
    est.mean.push_back(m.mean);
    est.standard_error.push_back(m.standard_error());
  }
  for (const auto& m : bridge) {
    est.bridge_residual.push_back(m.mean);
    est.bridge_standard_error.push_back(m.standard_error());
  }
  return est;
}

std::vector<PhaseRow> phase_diagram(double sigma1_sq, double sigma2_sq, const std::vector<double>& u_grid,
                                    const std::vector<double>& eta_grid) {
  std::vector<PhaseRow> rows;
  rows.reserve(u_grid.size() * eta_grid.size());
  for (const double u : u_grid) {
    if (!(u > 0.0 && u <= 1.0)) throw std::invalid_argument("phase diagram needs u in (0, 1]");
    for (const double eta : eta_grid) {
      const auto p = predict_behavior(sigma1_sq, sigma2_sq, eta, 1.0 - u);
      rows.push_back({u, eta, p.lambda_max_1, p.lambda_max_2, p.verdict});
    }
  }
  return rows;
}

void write_phase_csv(const std::vector<PhaseRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "u,eta,lambda_max_1,lambda_max_2,verdict\n";
  for (const auto& r : rows) {
    out << csv::number(r.u) << ',' << csv::number(r.eta) << ',' << csv::number(r.lambda_max_1) << ','
        << csv::number(r.lambda_max_2) << ',' << to_string(r.verdict) << '\n';
  }
}

double divergence_onset(double u, double lo, double hi, double tol) {
  const double gamma = 1.0 - u;
  auto excess = [&](double eta) { return top_eigenvalue_magnitude(transition_matrix(1.0, eta, gamma)) - 1.0; };
  if (!(excess(lo) <= 0.0) || !(excess(hi) > 0.0))
    throw std::invalid_argument("divergence_onset: bracket does not straddle lambda_max = 1");
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (excess(mid) > 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace mass::nesterov
