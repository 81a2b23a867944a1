#include "mass/problem.hpp"

#include "mass/csv.hpp"
#include "mass/random.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mass {

namespace {

constexpr double kInterpolationTolerance = 1e-10;
constexpr double kSolverResidualTolerance = 1e-8;
constexpr double kSolutionFloor = 1e-3;

struct Eigenbasis {
  Eigen::MatrixXd vectors;  // d x r, columns span range(H)
  Eigen::VectorXd values;   // r positive eigenvalues, ascending
};

Eigen::MatrixXd empirical_hessian(const Matrix& x) {
  const double n = static_cast<double>(x.rows());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  h.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), 1.0 / n);
  return h.selfadjointView<Eigen::Lower>();
}

Eigenbasis range_basis(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  if (eig.info() != Eigen::Success) throw std::runtime_error("Hessian eigendecomposition failed");
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double top = lambda(lambda.size() - 1);
  if (!(top > 0.0)) throw std::invalid_argument("zero Hessian: no positive eigenvalue");
  Eigen::Index first = 0;
  while (first < lambda.size() && lambda(first) <= kRankTolerance * top) ++first;
  const Eigen::Index r = lambda.size() - first;
  return {eig.eigenvectors().rightCols(r), lambda.tail(r)};
}

Vector draw_solution(Rng& rng, const std::vector<bool>& support) {
  const auto d = static_cast<Eigen::Index>(support.size());
  Vector w = Vector::Zero(d);
  while (true) {
    for (Eigen::Index j = 0; j < d; ++j) w(j) = support[j] ? rng.normal() : 0.0;
    const double norm = w.norm();
    if (norm == 0.0) continue;
    w /= norm;
    bool ok = true;
    for (Eigen::Index j = 0; j < d; ++j)
      if (support[j] && std::abs(w(j)) <= kSolutionFloor) ok = false;
    if (ok) return w;
  }
}

Vector targets_for(const Matrix& x, const Vector& w) { return x * w; }

double parse_cell(std::string_view text, std::size_t line, std::size_t column) {
  const auto cell = csv::trim(text);
  double value = 0.0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw CsvParseError(line, "non-numeric cell in column " + std::to_string(column) + ": '" +
                                  std::string(cell) + "'");
  }
  return value;
}

}  // namespace

LinearProblem::LinearProblem(Matrix features, Vector targets, std::optional<Vector> true_solution,
                             std::uint64_t seed, std::optional<PopulationConstants> population)
    : features_(std::move(features)),
      targets_(std::move(targets)),
      true_solution_(std::move(true_solution)),
      seed_(seed),
      population_(population) {
  if (features_.rows() < 1 || features_.cols() < 1)
    throw std::invalid_argument("LinearProblem needs n >= 1 and d >= 1");
  if (targets_.size() != features_.rows())
    throw std::invalid_argument("LinearProblem: target count does not match sample count");
  if (!features_.allFinite() || !targets_.allFinite())
    throw std::invalid_argument("LinearProblem: non-finite entry");
  if (true_solution_) {
    if (true_solution_->size() != features_.cols())
      throw std::invalid_argument("LinearProblem: solution dimension mismatch");
    const Vector residual = features_ * *true_solution_ - targets_;
    for (Eigen::Index i = 0; i < residual.size(); ++i) {
      if (std::abs(residual(i)) > kInterpolationTolerance * (1.0 + std::abs(targets_(i))))
        throw std::invalid_argument("LinearProblem: true solution does not interpolate row " +
                                    std::to_string(i));
    }
  }
}

SpectralProfile profile_from_constants(const PopulationConstants& c) {
  SpectralProfile p;
  p.L = c.L;
  p.mu = c.mu;
  p.L1 = c.L1;
  p.kappa_tilde = c.kappa_tilde;
  return p;
}

BatchSize BatchSize::of(std::size_t m) {
  if (m < 1) throw std::invalid_argument("batch size must be >= 1");
  return BatchSize(m, false);
}

std::size_t BatchSize::count() const {
  if (full_) throw std::logic_error("full batch has no finite count");
  return m_;
}

LinearProblem gen_component_decoupled(double sigma1, double sigma2, std::size_t n, std::uint64_t seed) {
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw std::invalid_argument("sigmas must be positive");
  if (!(sigma2 < sigma1)) throw std::invalid_argument("decoupled model requires sigma2 < sigma1");
  if (n < 2) throw std::invalid_argument("decoupled model requires n >= 2");

  Rng root(seed);
  Rng solution_rng = root.split(0);
  Rng row_rng = root.split(1);
  const Vector w = draw_solution(solution_rng, {true, true});

  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(n), 2);
  const double z_stddev = std::sqrt(2.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const bool first = row_rng.uniform() < 0.5;
    const double z = row_rng.normal(0.0, z_stddev);
    if (first)
      x(i, 0) = sigma1 * z;
    else
      x(i, 1) = sigma2 * z;
  }
  const double s1 = sigma1 * sigma1;
  const double s2 = sigma2 * sigma2;
  PopulationConstants pop{s1, s2, 6.0 * s1, 6.0};
  Vector y = targets_for(x, w);
  return LinearProblem(std::move(x), std::move(y), w, seed, pop);
}

LinearProblem gen_gaussian(const Vector& cov_diagonal, std::size_t n, std::uint64_t seed) {
  if (cov_diagonal.size() < 1) throw std::invalid_argument("empty covariance diagonal");
  if (n < 1) throw std::invalid_argument("gaussian generator requires n >= 1");
  std::vector<bool> support(static_cast<std::size_t>(cov_diagonal.size()));
  double top = 0.0, bottom = std::numeric_limits<double>::infinity(), trace = 0.0;
  std::size_t active = 0;
  for (Eigen::Index j = 0; j < cov_diagonal.size(); ++j) {
    const double c = cov_diagonal(j);
    if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("covariance entries must be >= 0");
    support[j] = c > 0.0;
    if (c > 0.0) {
      ++active;
      top = std::max(top, c);
      bottom = std::min(bottom, c);
      trace += c;
    }
  }
  if (active == 0) throw std::invalid_argument("all-zero covariance");

  Rng root(seed);
  Rng solution_rng = root.split(0);
  Rng row_rng = root.split(1);
  const Vector w = draw_solution(solution_rng, support);

  Matrix x(static_cast<Eigen::Index>(n), cov_diagonal.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      x(i, j) = support[j] ? row_rng.normal(0.0, std::sqrt(cov_diagonal(j))) : 0.0;

  PopulationConstants pop{top, bottom, 2.0 * top + trace, 2.0 + static_cast<double>(active)};
  Vector y = targets_for(x, w);
  return LinearProblem(std::move(x), std::move(y), w, seed, pop);
}

CsvParseError::CsvParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

LinearProblem load_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::vector<std::vector<double>> rows;
  std::size_t columns = 0;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = has_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto cells = csv::split(line);
    if (columns == 0) {
      columns = cells.size();
      if (columns < 2) throw CsvParseError(line_no, "need at least one feature column and a target");
    } else if (cells.size() != columns) {
      throw CsvParseError(line_no, "expected " + std::to_string(columns) + " columns, found " +
                                       std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(columns);
    for (std::size_t c = 0; c < cells.size(); ++c) row.push_back(parse_cell(cells[c], line_no, c + 1));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw CsvParseError(line_no, "no data rows in " + path.string());

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(columns - 1);
  Matrix x(n, d);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rows[i][j];
    y(i) = rows[i][d];
  }
  return LinearProblem(std::move(x), std::move(y));
}

void export_csv(const LinearProblem& problem, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto& x = problem.features();
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < x.cols(); ++j) header.push_back("x_" + std::to_string(j + 1));
  header.push_back("y");
  out << csv::join(header) << '\n';
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<std::string> cells;
    for (Eigen::Index j = 0; j < x.cols(); ++j) cells.push_back(csv::number(x(i, j)));
    cells.push_back(csv::number(problem.targets()(i)));
    out << csv::join(cells) << '\n';
  }
}

SpectralProfile spectral_profile(const LinearProblem& problem) {
  const Matrix& x = problem.features();
  SpectralProfile p;
  p.hessian = empirical_hessian(x);
  const Eigenbasis basis = range_basis(p.hessian);
  p.rank = static_cast<std::size_t>(basis.values.size());
  p.mu = basis.values(0);
  p.L = basis.values(basis.values.size() - 1);

  // Whitened rows z_i = Lambda^{-1/2} V^T x_i, so that ||z_i||^2 = ||x_i||^2_{H^+}.
  const Eigen::MatrixXd z =
      (x * basis.vectors) * basis.values.cwiseSqrt().cwiseInverse().asDiagonal();
  const double n = static_cast<double>(x.rows());
  const Eigen::VectorXd sq_norm = x.rowwise().squaredNorm();
  const Eigen::VectorXd sq_pinv_norm = z.rowwise().squaredNorm();

  const Eigen::MatrixXd m1 = z.transpose() * sq_norm.asDiagonal() * z / n;
  const Eigen::MatrixXd mt = z.transpose() * sq_pinv_norm.asDiagonal() * z / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(m1, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> et(mt, Eigen::EigenvaluesOnly);
  p.L1 = e1.eigenvalues().maxCoeff();
  p.kappa_tilde = et.eigenvalues().maxCoeff();
  return p;
}

BatchConstants batch_constants(const SpectralProfile& profile, BatchSize m) {
  BatchConstants c;
  if (m.is_full()) {
    c.L_m = profile.L;
    c.kappa_tilde_m = 1.0;
  } else {
    const double mm = m.value();
    c.L_m = profile.L1 / mm + (mm - 1.0) * profile.L / mm;
    c.kappa_tilde_m = profile.kappa_tilde / mm + (mm - 1.0) / mm;
  }
  c.kappa_m = c.L_m / profile.mu;
  return c;
}

std::optional<Reference> make_reference(const LinearProblem& problem) {
  const Matrix& x = problem.features();
  const double n = static_cast<double>(x.rows());
  Reference ref;
  ref.hessian = empirical_hessian(x);
  const Eigenbasis basis = range_basis(ref.hessian);
  ref.projector = basis.vectors * basis.vectors.transpose();
  ref.pinv = basis.vectors * basis.values.cwiseInverse().asDiagonal() * basis.vectors.transpose();
  const Vector b = x.transpose() * problem.targets() / n;
  ref.solution = ref.pinv * b;

  const Vector residual = x * ref.solution - problem.targets();
  for (Eigen::Index i = 0; i < residual.size(); ++i) {
    if (std::abs(residual(i)) > kSolverResidualTolerance * (1.0 + std::abs(problem.targets()(i))))
      return std::nullopt;
  }
  ref.grad_at_solution = ref.hessian * ref.solution - b;
  ref.loss_at_solution = 0.5 * residual.squaredNorm() / n;
  return ref;
}

Vector min_norm_solution(const LinearProblem& problem) {
  auto ref = make_reference(problem);
  if (!ref) throw NotInterpolable("problem is not interpolable: no exact least-squares solution");
  return std::move(ref->solution);
}

double empirical_loss(const LinearProblem& problem, const Vector& w) {
  return 0.5 * (problem.features() * w - problem.targets()).squaredNorm() /
         static_cast<double>(problem.samples());
}

Vector full_gradient(const LinearProblem& problem, const Vector& w) {
  const Matrix& x = problem.features();
  return x.transpose() * (x * w - problem.targets()) / static_cast<double>(x.rows());
}

double Reference::loss(const Vector& w) const {
  // Hot path in every run: stays allocation-free.
  const Eigen::Index d = solution.size();
  double linear = 0.0, quadratic = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double ej = w(j) - solution(j);
    linear += grad_at_solution(j) * ej;
    double row = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) row += hessian(k, j) * (w(k) - solution(k));
    quadratic += ej * row;
  }
  return loss_at_solution + linear + 0.5 * quadratic;
}

double Reference::dist_sq(const Vector& w) const { return (projector * (w - solution)).squaredNorm(); }

double Reference::pinv_norm_sq(const Vector& w) const {
  const Vector e = w - solution;
  return e.dot(pinv * e);
}

}  // namespace mass
