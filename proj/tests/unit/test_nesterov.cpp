#include "mass/nesterov_analysis.hpp"
#include "mass/problem.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <fstream>

using namespace mass::nesterov;
using cplx = std::complex<double>;

namespace {

// Quartic D_j(lambda) written out coefficient by coefficient, low to high degree.
std::array<double, 5> quartic_oracle(double t, double g) {
  const double a = (1 - t) * (1 - t) + 5 * t * t;
  const double s = 1 - t;
  const double p = (1 + g) * (1 + g);
  return {g * g * g * g * s * s * a, -g * g * p * s * s * a, 2 * g * p * s * a - g * g * s * s - g * g * a, -p * a, 1.0};
}

cplx horner(const std::array<double, 5>& c, cplx x) {
  cplx r = 0.0;
  for (int k = 4; k >= 0; --k) r = r * x + c[k];
  return r;
}

// Faddeev-LeVerrier: characteristic polynomial of a 4x4 matrix from traces.
std::array<double, 5> leverrier(const Matrix4& m) {
  std::array<double, 5> c{};
  c[4] = 1.0;
  Matrix4 mk = Matrix4::Zero();
  for (int k = 1; k <= 4; ++k) {
    mk = m * (mk + c[5 - k] * Matrix4::Identity());
    c[4 - k] = -mk.trace() / k;
  }
  return c;
}

// Roots of D_j other than lambda_1 = gamma (1 - t): deflate, depress, solve by Cardano.
struct CubicRoots {
  std::array<cplx, 3> roots;
  double T0, T1, T2;  // lambda = T0 + y, y^3 + (T1/3) y - T2/27 = 0
};

CubicRoots exact_cubic(double t, double u) {
  const auto c = quartic_oracle(t, 1 - u);
  const double l1 = (1 - u) * (1 - t);
  // Synthetic division of c4 l^4 + ... + c0 by (l - l1).
  const double b3 = c[4];
  const double b2 = c[3] + l1 * b3;
  const double b1 = c[2] + l1 * b2;
  const double b0 = c[1] + l1 * b1;
  const double a2 = b2 / b3, a1 = b1 / b3, a0 = b0 / b3;
  CubicRoots r;
  r.T0 = -a2 / 3;
  const double p = a1 - a2 * a2 / 3;
  const double q = 2 * a2 * a2 * a2 / 27 - a2 * a1 / 3 + a0;
  r.T1 = 3 * p;
  r.T2 = -27 * q;
  const cplx disc = std::sqrt(cplx(q * q / 4 + p * p * p / 27));
  cplx big = std::pow(-q / 2 + disc, 1.0 / 3.0);
  if (std::abs(big) < 1e-300) big = std::pow(-q / 2 - disc, 1.0 / 3.0);
  const cplx omega(-0.5, std::sqrt(3.0) / 2);
  cplx w = 1.0;
  for (auto& root : r.roots) {
    const cplx uu = big * w;
    root = r.T0 + uu - p / (3.0 * uu);
    w *= omega;
  }
  return r;
}

// First-order-in-t closed forms of T0, T1, T2.
std::array<double, 3> first_order_T(double t, double u) {
  const double u2 = u * u, u3 = u2 * u, u4 = u3 * u, u5 = u4 * u, u6 = u5 * u;
  const double t2 = t * t, t3 = t2 * t;
  const double T0 = 1 - u + u2 / 3 - 7 * t / 3 + 7 * u * t / 3 - 2 * u2 * t / 3;
  const double inner = -3 + 3 * u - u2 + 7 * t - 7 * u * t + 2 * u2 * t;
  const double T1 = -inner * inner + 3 * (3 - 6 * u + 4 * u2 - u3 - 10 * t + 20 * u * t - 13 * u2 * t + 3 * u3 * t);
  const double T2 = 9 * u4 - 9 * u5 + 2 * u6 - 72 * u2 * t + 144 * u3 * t - 141 * u4 * t + 69 * u5 * t - 12 * u6 * t +
                    252 * t2 - 756 * u * t2 + 1185 * u2 * t2 - 1110 * u3 * t2 + 615 * u4 * t2 - 186 * u5 * t2 +
                    24 * u6 * t2 - 686 * t3 + 2058 * u * t3 - 2646 * u2 * t3 + 1862 * u3 * t3 - 756 * u4 * t3 +
                    168 * u5 * t3 - 16 * u6 * t3;
  return {T0, T1, T2};
}

// det of the 3x3 moment matrix built from E of the scalar recursion with e_0 = e_{-1} = 1.
double moment_matrix_det(double t, double u) {
  const double g = 1 - u, s = 1 - t, a = s * s + 5 * t * t;
  const double e11 = a, e10 = s;
  const double e22 = a * ((1 + g) * (1 + g) * a - 2 * g * (1 + g) * s + g * g);
  const double e21 = s * ((1 + g) * a - g * s);
  Eigen::Matrix3d m;
  m << 1, e11, e22, 1, e10, e21, 1, 1, e11;
  return m.determinant();
}

std::vector<std::pair<double, double>> grid() {
  std::vector<std::pair<double, double>> out;
  for (double t : {1e-4, 0.01, 0.1, 0.3, 0.7, 1.0, 1.5})
    for (double g : {0.0, 0.3, 0.6, 0.9, 0.99}) out.emplace_back(t, g);
  return out;
}

}  // namespace

TEST_CASE("transition matrix structure") {
  SUBCASE("zero step: A = 1 and top eigenvalue 1") {
    const auto op = transition_matrix(1.0, 0.0, 0.9);
    CHECK(op.second_moment_factor() == 1.0);
    CHECK(top_eigenvalue_magnitude(op) == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("gamma = 0, eta = 1/sigma^2 by hand") {
    const auto op = transition_matrix(2.0, 0.5, 0.0);
    Matrix4 expected = Matrix4::Zero();
    expected(0, 0) = 5.0;
    expected(3, 0) = 1.0;
    CHECK((op.matrix - expected).norm() == 0.0);
  }
  SUBCASE("fixed entries") {
    for (const auto& [t, g] : grid()) {
      const auto m = transition_matrix(1.0, t, g).matrix;
      CHECK(m(3, 0) == 1.0);
      CHECK(m(1, 1) == 0.0);
      CHECK(m(2, 2) == 0.0);
      CHECK(m(3, 3) == 0.0);
    }
  }
  SUBCASE("determinant identity") {
    for (const auto& [t, g] : grid()) {
      const auto op = transition_matrix(1.0, t, g);
      const double expected = std::pow(g, 4) * (1 - t) * (1 - t) * op.second_moment_factor();
      CHECK(std::abs(op.matrix.determinant() - expected) <= 1e-12 * std::max(1.0, std::abs(expected)));
    }
  }
  SUBCASE("sigma enters only through eta sigma^2") {
    CHECK((transition_matrix(4.0, 0.05, 0.7).matrix - transition_matrix(1.0, 0.2, 0.7).matrix).norm() < 1e-15);
  }
  SUBCASE("rejects out-of-range inputs") {
    CHECK_THROWS(transition_matrix(0.0, 0.1, 0.5));
    CHECK_THROWS(transition_matrix(1.0, -0.1, 0.5));
    CHECK_THROWS(transition_matrix(1.0, 0.1, 1.0));
  }
}

TEST_CASE("characteristic polynomial oracles") {
  for (const auto& [t, g] : grid()) {
    const auto op = transition_matrix(1.0, t, g);
    const auto c = characteristic_polynomial(op);
    const auto d = quartic_oracle(t, g);
    const auto f = leverrier(op.matrix);
    for (int k = 0; k < 5; ++k) {
      CHECK(std::abs(c[k] - d[k]) <= 1e-12 * std::max(1.0, std::abs(d[k])));
      CHECK(std::abs(f[k] - d[k]) <= 1e-10 * std::max(1.0, std::abs(d[k])));
    }
  }
}

TEST_CASE("eigenvalues are roots of the quartic") {
  for (const auto& [t, g] : grid()) {
    const auto op = transition_matrix(1.0, t, g);
    const auto d = quartic_oracle(t, g);
    double scale = 0.0;
    for (double x : d) scale += x * x;
    scale = std::sqrt(scale);
    for (const auto& l : eigenvalues(op)) CHECK(std::abs(horner(d, l)) < 1e-9 * scale);
    CHECK(std::abs(horner(d, g * (1 - t))) < 1e-12 * scale);
  }
}

TEST_CASE("antisymmetric direction carries lambda_1") {
  const Vector4 v(0, -1, 1, 0);
  for (const auto& [t, g] : grid()) {
    const auto m = transition_matrix(1.0, t, g).matrix;
    CHECK((m * v - g * (1 - t) * v).norm() < 1e-14);
  }
}

TEST_CASE("dense eigensolver agrees with the exact cubic closed form") {
  for (const auto& [t, g] : grid()) {
    if (g == 0.0) continue;  // u = 1 collapses the cubic onto zero roots
    const auto cubic = exact_cubic(t, 1 - g);
    std::vector<double> from_formula{std::abs(g * (1 - t))};
    for (const auto& r : cubic.roots) from_formula.push_back(std::abs(r));
    std::vector<double> from_solver;
    for (const auto& l : eigenvalues(transition_matrix(1.0, t, g))) from_solver.push_back(std::abs(l));
    std::sort(from_formula.begin(), from_formula.end());
    std::sort(from_solver.begin(), from_solver.end());
    for (std::size_t k = 0; k < 4; ++k) CHECK(from_formula[k] == doctest::Approx(from_solver[k]).epsilon(1e-6));
  }
}

TEST_CASE("first-order T0, T1, T2 agree with the exact cubic up to O(t^2)") {
  for (double u : {0.1, 0.5, 0.9}) {
    std::array<double, 3> ratio_prev{};
    for (int k = 0; k < 3; ++k) {
      const double t = 0.01 / std::pow(2.0, k);
      const auto exact = exact_cubic(t, u);
      const auto approx = first_order_T(t, u);
      const std::array<double, 3> diff{approx[0] - exact.T0, approx[1] - exact.T1, approx[2] - exact.T2};
      for (int i = 0; i < 3; ++i) {
        const double scaled = diff[i] / (t * t);
        CHECK(std::abs(scaled) < 200.0);
        if (k > 0) CHECK(std::abs(scaled - ratio_prev[i]) < 0.2 * std::abs(ratio_prev[i]) + 1e-6);
        ratio_prev[i] = scaled;
      }
    }
    // At t = 0 the first-order forms are exact.
    const auto exact0 = exact_cubic(1e-12, u);
    const auto approx0 = first_order_T(1e-12, u);
    CHECK(approx0[0] == doctest::Approx(exact0.T0).epsilon(1e-9));
  }
}

TEST_CASE("top eigenvalue at SGD's step size exceeds one") {
  CHECK(top_eigenvalue_magnitude(transition_matrix(1.0, 1.0 / 6.0, 0.9)) > 1.0);
}

TEST_CASE("step-size threshold") {
  SUBCASE("closed-form value at u = 0.4") {
    CHECK(step_size_threshold(0.4) == doctest::Approx(0.156158909304).epsilon(1e-11));
    CHECK(1.0 / 6.0 > step_size_threshold(0.4));
  }
  SUBCASE("D_1(1) vanishes at the threshold") {
    for (double u : {0.05, 0.3, 0.6, 0.95}) {
      const double eta0 = step_size_threshold(u);
      CHECK(std::abs(horner(quartic_oracle(eta0, 1 - u), 1.0).real()) < 1e-12);
      CHECK(horner(quartic_oracle(eta0 * 1.01, 1 - u), 1.0).real() < 0.0);
    }
  }
  SUBCASE("small-u asymptote 2u/3") {
    CHECK(step_size_threshold(1e-3) / 1e-3 == doctest::Approx(2.0 / 3.0).epsilon(0.01));
  }
  SUBCASE("bisection recovers the threshold") {
    for (int k = 1; k <= 9; ++k) {
      const double u = 0.1 * k;
      const double eta0 = step_size_threshold(u);
      CHECK(std::abs(divergence_onset(u, 0.5 * eta0, 2.0 * eta0, 1e-13) - eta0) < 1e-6);
      CHECK(top_eigenvalue_magnitude(transition_matrix(1.0, 1.001 * eta0, 1 - u)) > 1.0);
      CHECK(top_eigenvalue_magnitude(transition_matrix(1.0, 0.999 * eta0, 1 - u)) <= 1.0);
    }
    CHECK_THROWS(divergence_onset(0.5, 1.0, 2.0));
  }
  SUBCASE("domain") {
    CHECK_THROWS(step_size_threshold(1.0));
    CHECK_THROWS(step_size_threshold(0.0));
    CHECK_THROWS(step_size_threshold(1.5));
  }
}

TEST_CASE("behavior prediction") {
  const double s2 = std::ldexp(1.0, -9);
  SUBCASE("SGD's step with gamma = 0.9 diverges on the fast component") {
    const auto p = predict_behavior(1.0, s2, 1.0 / 6.0, 0.9);
    CHECK(p.verdict == Verdict::diverges);
    CHECK(p.dominant_component == 1);
  }
  SUBCASE("a stable setting converges at a 1 - O(1/kappa) rate") {
    const double eta = 0.5 * std::min(step_size_threshold(0.1), 1.0 / 6.0);
    const double kappa = 1.0 / s2;
    const auto p = predict_behavior(1.0, s2, eta, 0.9);
    CHECK(p.verdict == Verdict::converges);
    CHECK(p.dominant_component == 2);
    const double scaled_gap = kappa * (1.0 - p.rate());
    CHECK(scaled_gap > 0.01);
    CHECK(scaled_gap < 10.0);
  }
  SUBCASE("identical components") {
    const auto p = predict_behavior(0.5, 0.5, 0.01, 0.5);
    CHECK(p.lambda_max_1 == p.lambda_max_2);
    CHECK(p.rate() == top_eigenvalue_magnitude(transition_matrix(0.5, 0.01, 0.5)));
  }
}

TEST_CASE("slow-component gap: kappa (1 - lambda_max(B2)) stays bounded") {
  const double u = 0.1;
  const double eta = 0.99 * std::min(step_size_threshold(u), 1.0 / 6.0);
  std::vector<double> q;
  for (int e : {6, 9, 12, 15}) {
    const double kappa = std::ldexp(1.0, e);
    q.push_back(kappa * (1.0 - top_eigenvalue_magnitude(transition_matrix(1.0 / kappa, eta, 1 - u))));
  }
  const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
  CHECK(*lo > 0.0);
  CHECK(*hi / *lo <= 10.0);
}

TEST_CASE("det(M') closed form") {
  CHECK(det_M_prime(1.0, 0.0) == doctest::Approx(20.0));
  SUBCASE("cubic vanishing at t -> 0") {
    for (double u : {0.0, 0.5}) {
      const double r = det_M_prime(2e-6, u) / det_M_prime(1e-6, u);
      CHECK(r == doctest::Approx(8.0).epsilon(1e-4));
    }
  }
  SUBCASE("proportional to the moment-matrix determinant") {
    // Building M' from the expected moments of the recursion gives exactly 4x the displayed form.
    for (double t : {0.05, 0.3, 1.0, 1.7})
      for (double u : {0.0, 0.2, 0.7}) CHECK(moment_matrix_det(t, u) == doctest::Approx(4.0 * det_M_prime(t, u)));
  }
  SUBCASE("quadratic factor has a positive root once u > 1/3") {
    CHECK(det_M_prime(0.1, 0.99) * det_M_prime(0.3, 0.99) < 0.0);
    CHECK(det_M_prime(0.1, 0.2) > 0.0);
  }
  CHECK_THROWS(det_M_prime(0.0, 0.5));
}

TEST_CASE("Monte-Carlo second moment") {
  SUBCASE("one-step bridge matches B within five standard errors") {
    for (double eta : {0.05, 0.15})
      for (double g : {0.0, 0.6, 0.9}) {
        const auto est = monte_carlo_second_moment(1.0, eta, g, 1.0, 20, 4000, 17);
        for (std::size_t t = 0; t < 20; ++t)
          for (int k = 0; k < 4; ++k)
            CHECK(std::abs(est.bridge_residual[t](k)) <= 5.0 * est.bridge_standard_error[t](k) + 1e-15);
        const Vector4 b1 = transition_matrix(1.0, eta, g).matrix * est.mean[0];
        for (int k = 0; k < 4; ++k) CHECK(std::abs(est.mean[1](k) - b1(k)) <= 5.0 * est.standard_error[1](k) + 1e-15);
      }
  }
  SUBCASE("gamma = 0 decays at A^t") {
    const double eta = 0.1;
    const auto est = monte_carlo_second_moment(1.0, eta, 0.0, 1.0, 10, 20000, 4);
    const double a = (1 - eta) * (1 - eta) + 5 * eta * eta;
    for (std::size_t t = 1; t <= 10; ++t)
      CHECK(std::abs(est.mean[t](0) - std::pow(a, t)) <= 5.0 * est.standard_error[t](0));
  }
  SUBCASE("zero offset stays at zero") {
    const auto est = monte_carlo_second_moment(1.0, 0.1, 0.5, 0.0, 5, 100, 1);
    for (const auto& v : est.mean) CHECK(v.norm() == 0.0);
  }
  CHECK_THROWS(monte_carlo_second_moment(1.0, 0.1, 0.5, 1.0, 5, 99, 1));
}

TEST_CASE("phase diagram rows") {
  test::TempDir dir("phase");
  const auto rows = phase_diagram(1.0, 0.01, {0.1, 0.5}, {0.01, 0.2});
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].u == 0.1);
  CHECK(rows[1].eta == 0.2);
  CHECK(rows[1].verdict == Verdict::diverges);
  write_phase_csv(rows, dir / "p.csv");
  std::ifstream in(dir / "p.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "u,eta,lambda_max_1,lambda_max_2,verdict");
}
