#include "mass/problem.hpp"
#include "mass/random.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace mass;

namespace {

// Diagonal oracle for data whose rows each have one nonzero coordinate:
// H_jj = mean x_j^2, L1 = max_j mean x_j^4 / H_jj, kappa~ = max_j mean x_j^4 / H_jj^2.
struct DiagonalOracle {
  double L1 = 0.0;
  double kappa_tilde = 0.0;
};

DiagonalOracle single_coordinate_oracle(const Matrix& x) {
  DiagonalOracle o;
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double h = x.col(j).squaredNorm() / n;
    const double q = x.col(j).array().pow(4).sum() / n;
    o.L1 = std::max(o.L1, q / h);
    o.kappa_tilde = std::max(o.kappa_tilde, q / (h * h));
  }
  return o;
}

Vector f2_covariance() {
  Vector c(48);
  c.head(8).setOnes();
  c.tail(40).setConstant(std::ldexp(1.0, -10));
  return c;
}

}  // namespace

TEST_CASE("decoupled generator exposes the closed-form population constants") {
  const double s2 = test::decoupled_sigma2(9);
  const auto p = gen_component_decoupled(1.0, s2, 2000, 7);
  REQUIRE(p.population());
  const auto& c = *p.population();
  CHECK(c.L1 / c.mu == doctest::Approx(6.0 / (s2 * s2)).epsilon(1e-14));
  CHECK(c.kappa_tilde == 6.0);
  CHECK(c.L == doctest::Approx(1.0));
  CHECK(p.samples() == 2000);
  CHECK(p.dim() == 2);
}

TEST_CASE("decoupled generator rejects invalid parameters") {
  CHECK_THROWS_AS(gen_component_decoupled(1.0, 1.0, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(gen_component_decoupled(0.5, 1.0, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(gen_component_decoupled(0.0, -1.0, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(gen_component_decoupled(1.0, 0.5, 1, 1), std::invalid_argument);
}

TEST_CASE("decoupled rows have a single active coordinate and interpolate exactly") {
  const auto p = gen_component_decoupled(1.0, 0.5, 500, 11);
  const auto& x = p.features();
  for (Eigen::Index i = 0; i < x.rows(); ++i) CHECK((x(i, 0) == 0.0 || x(i, 1) == 0.0));
  const auto& w = *p.true_solution();
  CHECK(w.norm() == doctest::Approx(1.0));
  CHECK(std::abs(w(0)) > 1e-3);
  CHECK(std::abs(w(1)) > 1e-3);
  CHECK(empirical_loss(p, w) <= 1e-20);
}

TEST_CASE("empirical decoupled profile approaches population values") {
  const auto p = gen_component_decoupled(1.0, 0.5, 100000, 3);
  const auto prof = spectral_profile(p);
  CHECK(test::rel_diff(prof.L, 1.0) < 0.05);
  CHECK(test::rel_diff(prof.mu, 0.25) < 0.05);
  CHECK(test::rel_diff(prof.L1, 6.0) < 0.05);
  CHECK(test::rel_diff(prof.kappa_tilde, 6.0) < 0.05);
}

TEST_CASE("spectral profile matches the single-coordinate oracle") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto p = gen_component_decoupled(1.0, 0.2, 3000, seed);
    const auto prof = spectral_profile(p);
    const auto o = single_coordinate_oracle(p.features());
    CHECK(test::rel_diff(prof.L1, o.L1) < 1e-10);
    CHECK(test::rel_diff(prof.kappa_tilde, o.kappa_tilde) < 1e-10);
  }
}

TEST_CASE("decoupled estimates are stable when n doubles") {
  const auto a = spectral_profile(gen_component_decoupled(1.0, 0.5, 100000, 21));
  const auto b = spectral_profile(gen_component_decoupled(1.0, 0.5, 200000, 22));
  CHECK(test::rel_diff(a.L1, b.L1) < 0.02);
  CHECK(test::rel_diff(a.kappa_tilde, b.kappa_tilde) < 0.02);
}

TEST_CASE("gaussian generator population constants") {
  SUBCASE("diag(1, 1, small) gives L1 close to 4") {
    Vector c(3);
    c << 1.0, 1.0, 1e-4;
    const auto p = gen_gaussian(c, 2000, 1);
    REQUIRE(p.population());
    CHECK(p.population()->L1 == doctest::Approx(4.0 + 1e-4).epsilon(1e-14));
    CHECK(1.0 / p.population()->L1 == doctest::Approx(0.25).epsilon(1e-3));
  }
  SUBCASE("kappa~ = 2 + number of active dimensions") {
    Vector c = Vector::Zero(6);
    c(0) = 2.0;
    c(2) = 0.5;
    c(5) = 1.0;
    const auto p = gen_gaussian(c, 100, 5);
    CHECK(p.population()->kappa_tilde == 5.0);
    CHECK(p.population()->mu == 0.5);
    for (Eigen::Index j : {1, 3, 4}) CHECK(p.true_solution()->coeff(j) == 0.0);
  }
  SUBCASE("the regime dataset has m1* near 10 and m2* near 50") {
    const auto p = gen_gaussian(f2_covariance(), 2000, 42);
    const auto& c = *p.population();
    CHECK(c.L1 / c.L == doctest::Approx(10.0 + 40.0 / 1024.0));
    CHECK(c.kappa_tilde == 50.0);
  }
  SUBCASE("all-zero covariance is rejected") {
    CHECK_THROWS_AS(gen_gaussian(Vector::Zero(3), 10, 1), std::invalid_argument);
  }
}

TEST_CASE("empirical kappa~ of a large isotropic gaussian is close to 2 + d") {
  const auto p = gen_gaussian(Vector::Ones(3), 100000, 9);
  CHECK(test::rel_diff(spectral_profile(p).kappa_tilde, 5.0) < 0.05);
}

TEST_CASE("profiles respect the ordering bounds") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng rng(seed);
    Vector c(5);
    for (Eigen::Index j = 0; j < 5; ++j) c(j) = 0.01 + rng.uniform();
    const auto prof = spectral_profile(gen_gaussian(c, 400, seed));
    CHECK(prof.L >= prof.mu);
    CHECK(prof.mu > 0.0);
    CHECK(prof.L1 >= prof.L * (1 - 1e-12));
    CHECK(prof.kappa_tilde <= prof.L1 / prof.mu * (1 + 1e-12));
    CHECK(prof.kappa_tilde >= 1.0 - 1e-12);
  }
}

TEST_CASE("identical samples give trivial constants") {
  Matrix x(4, 2);
  x << 1, 0, 1, 0, 1, 0, 1, 0;
  const LinearProblem p(x, Vector::Constant(4, 3.0));
  const auto prof = spectral_profile(p);
  CHECK(prof.rank == 1);
  CHECK(prof.L == doctest::Approx(1.0));
  CHECK(prof.mu == doctest::Approx(1.0));
  CHECK(prof.L1 == doctest::Approx(1.0));
  CHECK(prof.kappa_tilde == doctest::Approx(1.0));
}

TEST_CASE("zero Hessian is rejected") {
  const LinearProblem p(Matrix::Zero(3, 2), Vector::Zero(3));
  CHECK_THROWS(spectral_profile(p));
}

TEST_CASE("batch constants") {
  const SpectralProfile prof = profile_from_constants({1.0, 0.25, 6.0, 6.0});
  SUBCASE("m = 1") {
    const auto c = batch_constants(prof, BatchSize::of(1));
    CHECK(c.L_m == 6.0);
    CHECK(c.kappa_m == 24.0);
    CHECK(c.kappa_tilde_m == 6.0);
  }
  SUBCASE("m = 3") {
    const auto c = batch_constants(prof, BatchSize::of(3));
    CHECK(c.L_m == doctest::Approx(8.0 / 3.0).epsilon(1e-15));
    CHECK(c.kappa_m == doctest::Approx(32.0 / 3.0).epsilon(1e-15));
    CHECK(c.kappa_tilde_m == doctest::Approx(8.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("full batch limit and monotone approach") {
    const auto c = batch_constants(prof, BatchSize::full());
    CHECK(c.L_m == 1.0);
    CHECK(c.kappa_m == 4.0);
    CHECK(c.kappa_tilde_m == 1.0);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t m = 1; m <= 4096; m *= 2) {
      const double l = batch_constants(prof, BatchSize::of(m)).L_m;
      CHECK(l < prev);
      CHECK(l > 1.0);
      prev = l;
    }
  }
  SUBCASE("exactly linear in 1/m") {
    for (std::size_t m : {1u, 2u, 3u, 7u, 64u, 1000u}) {
      const auto c = batch_constants(prof, BatchSize::of(m));
      CHECK(std::abs((c.L_m - prof.L) - (prof.L1 - prof.L) / static_cast<double>(m)) < 1e-12);
    }
  }
  SUBCASE("m = 0 rejected") { CHECK_THROWS_AS(BatchSize::of(0), std::invalid_argument); }
}

TEST_CASE("min-norm solution") {
  SUBCASE("single sample") {
    Matrix x(1, 2);
    x << 1, 0;
    Vector y(1);
    y << 2;
    const Vector w = min_norm_solution(LinearProblem(x, y));
    CHECK(w(0) == doctest::Approx(2.0));
    CHECK(std::abs(w(1)) < 1e-15);
  }
  SUBCASE("generated data recover the stored solution") {
    const auto p = gen_component_decoupled(1.0, 0.1, 2000, 4);
    CHECK((min_norm_solution(p) - *p.true_solution()).norm() < 1e-8);
  }
  SUBCASE("rank-deficient data return the projection of w*") {
    Vector c(4);
    c << 1.0, 0.0, 2.0, 0.0;
    const auto p = gen_gaussian(c, 300, 8);
    const Vector w = min_norm_solution(p);
    CHECK((w - *p.true_solution()).norm() < 1e-8);
    CHECK(w(1) == doctest::Approx(0.0));
  }
  SUBCASE("random full-rank data with a known solution") {
    Rng rng(17);
    Matrix x(50, 6);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
    Vector w(6);
    for (Eigen::Index j = 0; j < 6; ++j) w(j) = rng.normal();
    const LinearProblem p(x, x * w);
    CHECK((min_norm_solution(p) - w).norm() < 1e-8);
  }
  SUBCASE("inconsistent data are not interpolable") {
    Matrix x(2, 1);
    x << 1, 1;
    Vector y(2);
    y << 1, 2;
    const LinearProblem p(x, y);
    CHECK_THROWS_AS(min_norm_solution(p), NotInterpolable);
    CHECK_FALSE(make_reference(p).has_value());
    CHECK(empirical_loss(p, Vector::Constant(1, 1.5)) == doctest::Approx(0.125));
  }
}

TEST_CASE("LinearProblem validates its invariants") {
  Matrix x(2, 1);
  x << 1, 2;
  Vector y(2);
  y << 1, 2;
  CHECK_NOTHROW(LinearProblem(x, y, Vector::Constant(1, 1.0)));
  CHECK_THROWS(LinearProblem(x, y, Vector::Constant(1, 1.1)));
  CHECK_THROWS(LinearProblem(x, Vector::Zero(3)));
  Matrix bad = x;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(LinearProblem(bad, y));
  CHECK_THROWS(LinearProblem(Matrix(0, 1), Vector(0)));
}

TEST_CASE("reference expansion agrees with direct evaluation") {
  const auto p = gen_gaussian(Vector::LinSpaced(4, 0.5, 2.0), 200, 6);
  const auto ref = make_reference(p);
  REQUIRE(ref);
  Rng rng(1);
  for (int k = 0; k < 5; ++k) {
    Vector w(4);
    for (Eigen::Index j = 0; j < 4; ++j) w(j) = rng.normal();
    CHECK(test::rel_diff(ref->loss(w), empirical_loss(p, w)) < 1e-10);
    const Vector g = full_gradient(p, w);
    CHECK((g - p.features().transpose() * (p.features() * w - p.targets()) / 200.0).norm() < 1e-12);
    CHECK(ref->dist_sq(w) == doctest::Approx((w - ref->solution).squaredNorm()));
  }
}

TEST_CASE("generators are deterministic in the seed") {
  const auto a = gen_component_decoupled(1.0, 0.3, 100, 5);
  const auto b = gen_component_decoupled(1.0, 0.3, 100, 5);
  const auto c = gen_component_decoupled(1.0, 0.3, 100, 6);
  CHECK(a.features() == b.features());
  CHECK(a.targets() == b.targets());
  CHECK(a.features() != c.features());
}

TEST_CASE("csv ingestion") {
  test::TempDir dir("csv");
  SUBCASE("three rows, two features, with header") {
    std::ofstream(dir / "a.csv") << "x_1,x_2,y\n1,2,3\n4,5,6\n7,8,9\n";
    const auto p = load_csv(dir / "a.csv", true);
    CHECK(p.samples() == 3);
    CHECK(p.dim() == 2);
    CHECK(p.features()(2, 1) == 8.0);
    CHECK(p.targets()(1) == 6.0);
    CHECK_FALSE(p.true_solution().has_value());
  }
  SUBCASE("empty file") {
    std::ofstream(dir / "empty.csv");
    CHECK_THROWS(load_csv(dir / "empty.csv", false));
  }
  SUBCASE("column mismatch is reported with its line") {
    std::ofstream(dir / "b.csv") << "1,2,3\n4,5\n";
    try {
      load_csv(dir / "b.csv", false);
      FAIL("expected a parse error");
    } catch (const CsvParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("non-numeric cell is reported with its line") {
    std::ofstream(dir / "c.csv") << "h1,h2\n1,2\n3,abc\n";
    try {
      load_csv(dir / "c.csv", true);
      FAIL("expected a parse error");
    } catch (const CsvParseError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("missing file") { CHECK_THROWS(load_csv(dir / "nope.csv", false)); }
  SUBCASE("export round-trips") {
    const auto p = gen_gaussian(Vector::LinSpaced(3, 0.1, 1.0), 50, 2);
    export_csv(p, dir / "rt.csv");
    const auto q = load_csv(dir / "rt.csv", true);
    CHECK((p.features() - q.features()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((p.targets() - q.targets()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}
