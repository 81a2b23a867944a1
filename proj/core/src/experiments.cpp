#include "mass/experiments.hpp"

#include "mass/csv.hpp"
#include "mass/work_queue.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace mass::experiments {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kScalingTolerance = 0.15;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

Reference require_reference(const LinearProblem& problem) {
  auto ref = make_reference(problem);
  if (!ref) throw NotInterpolable("problem admits no interpolating solution");
  return std::move(*ref);
}

RunOptions base_options(BatchSize batch, std::size_t max_iters) {
  RunOptions o;
  o.sampling = batch.is_full() ? Sampling::full_batch : Sampling::with_replacement;
  o.batch_size = batch.is_full() ? 1 : batch.count();
  o.max_iters = max_iters;
  o.eval_every = 1;
  o.keep_records = false;
  return o;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void GridSpec::validate() const {
  require(!eta_grid.empty(), "eta grid is empty");
  require(!gamma_grid.empty(), "gamma grid is empty");
  require(repeats >= 3, "grid search needs at least 3 repeats");
  for (double e : eta_grid) require(e > 0.0 && std::isfinite(e), "eta grid values must be positive");
  for (double g : gamma_grid) require(g >= 0.0 && g < 1.0, "gamma grid values must lie in [0, 1)");
}

std::vector<double> log_space(double lo, double hi, std::size_t points) {
  require(lo > 0.0 && hi >= lo && points >= 1, "log_space needs 0 < lo <= hi and points >= 1");
  std::vector<double> out(points);
  if (points == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < points; ++i)
    out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1));
  out.back() = hi;
  return out;
}

GridSpec default_grid() { return {log_space(1e-4, 1.0, 25), {0.0, 0.5, 0.8, 0.9, 0.95, 0.99}, 5}; }

double median_iterations(const std::vector<std::optional<std::size_t>>& counts) {
  require(!counts.empty(), "median of an empty set");
  std::vector<double> v;
  v.reserve(counts.size());
  for (const auto& c : counts) v.push_back(c ? static_cast<double>(*c) : kInf);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  const double a = v[n / 2 - 1], b = v[n / 2];
  return std::isinf(b) ? kInf : 0.5 * (a + b);
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::reached: return "reached";
    case Status::not_reached: return "not_reached";
    case Status::diverged: return "diverged";
  }
  return "unknown";
}

const MethodResult& ComparisonResult::best(Method m) const {
  for (const auto& r : methods)
    if (r.method == m) return r;
  throw std::out_of_range("method missing from comparison");
}

ComparisonResult compare_optimizers(const LinearProblem& problem, const ComparisonConfig& config) {
  config.grid.validate();
  require(config.max_iters >= 1, "max_iters must be >= 1");
  const Reference ref = require_reference(problem);

  ComparisonResult result;
  result.profile = spectral_profile(problem);
  const auto optimal = optimal_hyperparams(result.profile, config.batch);

  auto add = [&](Method m, HyperParamsPractical p) {
    CellResult c;
    c.method = m;
    c.params = p;
    c.iterations.resize(config.grid.repeats);
    result.cells.push_back(std::move(c));
  };
  for (double eta : config.grid.eta_grid) add(Method::sgd, {eta, 0.0, 0.0});
  for (Method m : {Method::nesterov, Method::heavy_ball})
    for (double eta : config.grid.eta_grid)
      for (double gamma : config.grid.gamma_grid) add(m, {eta, 0.0, gamma});
  add(Method::mass, optimal.practical);

  const std::size_t repeats = config.grid.repeats;
  std::vector<char> diverged(result.cells.size() * repeats, 0);
  parallel_for(result.cells.size() * repeats, config.jobs, [&](std::size_t task) {
    CellResult& cell = result.cells[task / repeats];
    const std::size_t r = task % repeats;
    RunOptions o = base_options(config.batch, config.max_iters);
    o.seed = derive_seed(config.seed, r);
    o.target = config.target;
    const Trajectory t = run(problem, &ref, {cell.method, cell.params, MassForm::practical}, o);
    cell.iterations[r] = t.iterations_to_target();
    diverged[task] = t.diverged ? 1 : 0;
  });

  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    auto& cell = result.cells[c];
    for (std::size_t r = 0; r < repeats; ++r) cell.diverged_runs += diverged[c * repeats + r];
    cell.median = median_iterations(cell.iterations);
  }

  for (Method m : {Method::sgd, Method::nesterov, Method::heavy_ball, Method::mass}) {
    MethodResult best;
    best.method = m;
    best.median_iterations = kInf;
    bool all_diverged = true;
    for (const auto& cell : result.cells) {
      if (cell.method != m) continue;
      if (best.cells_tried++ == 0) best.params = cell.params;
      if (2 * cell.diverged_runs <= repeats) all_diverged = false;
      if (cell.median < best.median_iterations) {
        best.median_iterations = cell.median;
        best.params = cell.params;
      }
    }
    best.status = std::isfinite(best.median_iterations) ? Status::reached
                  : all_diverged                        ? Status::diverged
                                                        : Status::not_reached;
    result.methods.push_back(best);
  }
  return result;
}

void write_comparison_csv(const ComparisonResult& result, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "method,eta1,eta2,gamma,median_iterations,status\n";
  for (const auto& r : result.methods) {
    out << to_string(r.method) << ',' << csv::number(r.params.eta1) << ',' << csv::number(r.params.eta2) << ','
        << csv::number(r.params.gamma) << ',' << csv::number(r.median_iterations) << ',' << to_string(r.status)
        << '\n';
  }
}

std::pair<double, double> critical_batch_sizes(double L, double L1, double kappa_tilde) {
  require(L > 0.0 && L1 > 0.0 && kappa_tilde > 0.0, "critical sizes need positive constants");
  const double ratio = L1 / L;
  return {std::min(ratio, kappa_tilde), std::max(ratio, kappa_tilde)};
}

const RegimeRow& RegimeReport::row(std::size_t m) const {
  for (const auto& r : rows)
    if (r.m == m) return r;
  throw std::out_of_range("batch size missing from regime report");
}

RegimeReport regime_sweep(const LinearProblem& problem, const RegimeConfig& config) {
  require(!config.m_list.empty(), "regime sweep needs at least one batch size");
  require(config.repeats >= 1, "regime sweep needs at least one repeat");
  const Reference ref = require_reference(problem);
  const SpectralProfile profile = spectral_profile(problem);

  RegimeReport report;
  if (const auto& pop = problem.population()) {
    std::tie(report.m1_star, report.m2_star) = critical_batch_sizes(pop->L, pop->L1, pop->kappa_tilde);
    report.population_constants = true;
  } else {
    std::tie(report.m1_star, report.m2_star) = critical_batch_sizes(profile.L, profile.L1, profile.kappa_tilde);
  }

  for (std::size_t m : config.m_list) {
    RegimeRow row;
    row.m = m;
    row.params = optimal_hyperparams(profile, BatchSize::of(m));
    const BatchConstants c = batch_constants(profile, BatchSize::of(m));
    row.theory_speed = 1.0 / std::sqrt(c.kappa_m * c.kappa_tilde_m);
    report.rows.push_back(row);
  }

  const std::size_t repeats = config.repeats;
  std::vector<std::optional<std::size_t>> counts(report.rows.size() * repeats);
  parallel_for(counts.size(), config.jobs, [&](std::size_t task) {
    const RegimeRow& row = report.rows[task / repeats];
    RunOptions o = base_options(BatchSize::of(row.m), config.max_iters);
    o.seed = derive_seed(config.seed, task % repeats);
    o.target = config.target;
    counts[task] = run(problem, &ref, {Method::mass, row.params.practical, MassForm::practical}, o)
                       .iterations_to_target();
  });

  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    auto& row = report.rows[i];
    const std::vector<std::optional<std::size_t>> slice(counts.begin() + static_cast<std::ptrdiff_t>(i * repeats),
                                                        counts.begin() + static_cast<std::ptrdiff_t>((i + 1) * repeats));
    row.median_iterations = median_iterations(slice);
    row.reached = std::isfinite(row.median_iterations);
    row.s_m = row.reached ? 1.0 / std::max(row.median_iterations, 1.0) : 0.0;
  }
  return report;
}

void write_regime_csv(const RegimeReport& report, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "m,s_m,theory_speed,eta,alpha,delta,median_iterations,reached\n";
  for (const auto& r : report.rows) {
    const auto& a = r.params.analytic;
    out << r.m << ',' << csv::number(r.s_m) << ',' << csv::number(r.theory_speed) << ',' << csv::number(a.eta)
        << ',' << csv::number(a.alpha) << ',' << csv::number(a.delta) << ','
        << csv::number(r.median_iterations) << ',' << (r.reached ? "true" : "false") << '\n';
  }
}

LinearScalingReport linear_scaling_check(const SpectralProfile& profile, std::size_t m, std::size_t k) {
  require(m >= 1 && k >= 1, "linear scaling needs m, k >= 1");
  const auto base = optimal_hyperparams(profile, BatchSize::of(m)).analytic;
  const auto scaled = optimal_hyperparams(profile, BatchSize::of(k * m)).analytic;
  const double kk = static_cast<double>(k);
  LinearScalingReport r;
  r.eta_ratio = scaled.eta / (kk * base.eta);
  r.alpha_ratio = scaled.alpha / (kk * base.alpha);
  r.delta_ratio = scaled.delta / (kk * base.delta);
  r.holds = std::abs(r.eta_ratio - 1.0) <= kScalingTolerance && std::abs(r.alpha_ratio - 1.0) <= kScalingTolerance &&
            std::abs(r.delta_ratio - 1.0) <= kScalingTolerance;
  return r;
}

std::vector<LyapunovRow> lyapunov_suite(const LinearProblem& problem, const HyperParamsAnalytic& params,
                                        const LyapunovConfig& config) {
  require(config.t_max >= 1, "lyapunov suite needs t_max >= 1");
  require(config.n_seeds >= 2, "lyapunov suite needs at least 2 seeds");
  const Reference ref = require_reference(problem);
  const RunSpec spec{Method::mass, to_practical(params), MassForm::analytic};
  const bool exact = config.batch.is_full();

  // ratios[s * t_max + t]; NaN marks steps a diverged run never reached.
  const std::size_t t_max = config.t_max;
  std::vector<double> ratios(config.n_seeds * t_max, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t s = 0; s < config.n_seeds; ++s) {
    RunOptions o = base_options(config.batch, t_max);
    o.keep_records = true;
    o.seed = derive_seed(config.seed, s);
    o.initial_point = config.initial_point;
    const Trajectory traj = run(problem, &ref, spec, o);
    for (std::size_t i = 0; i + 1 < traj.records.size(); ++i) {
      const double now = traj.records[i].lyapunov.value_or(0.0);
      const double next = traj.records[i + 1].lyapunov.value_or(0.0);
      ratios[s * t_max + i] = now > 0.0 ? next / now : 0.0;
    }
  }

  std::vector<LyapunovRow> rows;
  rows.reserve(t_max);
  const double bound = 1.0 - params.alpha;
  for (std::size_t t = 0; t < t_max; ++t) {
    double sum = 0.0, sum_sq = 0.0, worst = 0.0;
    std::size_t count = 0;
    for (std::size_t s = 0; s < config.n_seeds; ++s) {
      const double r = ratios[s * t_max + t];
      if (std::isnan(r)) continue;
      sum += r;
      sum_sq += r * r;
      worst = std::max(worst, r);
      ++count;
    }
    LyapunovRow row;
    row.t = t;
    row.bound = bound;
    if (count == 0) {
      row.holds = false;
      rows.push_back(row);
      continue;
    }
    const double n = static_cast<double>(count);
    row.mean_ratio = sum / n;
    const double var = count > 1 ? std::max(0.0, (sum_sq - n * row.mean_ratio * row.mean_ratio) / (n - 1.0)) : 0.0;
    row.standard_error = std::sqrt(var / n);
    row.holds = exact ? worst <= bound * (1.0 + 1e-12) + 1e-15
                      : row.mean_ratio <= bound + 3.0 * row.standard_error;
    rows.push_back(row);
  }
  return rows;
}

std::vector<AvrRow> avr_suite(const LinearProblem& problem, const std::vector<double>& radii, std::size_t n_samples,
                              std::uint64_t seed, std::size_t m) {
  require(n_samples >= 2, "avr suite needs at least 2 samples");
  require(m >= 1, "avr suite needs m >= 1");
  const Reference ref = require_reference(problem);
  const Matrix& x = problem.features();
  const auto d = static_cast<Eigen::Index>(problem.dim());

  Rng root(seed);
  Rng dir_rng = root.split(0);
  Vector xi(d);
  for (Eigen::Index j = 0; j < d; ++j) xi(j) = dir_rng.normal();
  xi = ref.projector * xi;
  require(xi.norm() > 0.0, "Hessian has empty range");
  xi.normalize();

  // tr E[(H~_1 - H)^2] = mean ||x||^4 - tr H^2, and a batch of m divides it by m.
  double fourth = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) fourth += std::pow(x.row(i).squaredNorm(), 2);
  fourth /= static_cast<double>(x.rows());
  const double spread = (fourth - (ref.hessian * ref.hessian).trace()) / static_cast<double>(m);

  std::vector<AvrRow> rows;
  std::vector<std::size_t> batch(m);
  Vector g(d);
  for (std::size_t k = 0; k < radii.size(); ++k) {
    const double r = radii[k];
    require(r >= 0.0 && std::isfinite(r), "radii must be non-negative");
    const Vector w = ref.solution + r * xi;
    const Vector mean_grad = ref.hessian * (w - ref.solution) + ref.grad_at_solution;
    Rng rng = root.split(1);  // same draws at every radius
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
      for (auto& i : batch) i = rng.index(problem.samples());
      stochastic_gradient(problem, w, batch, g);
      const double q = (g - mean_grad).squaredNorm();
      sum += q;
      sum_sq += q * q;
    }
    const double n = static_cast<double>(n_samples);
    AvrRow row;
    row.radius = r;
    row.measured = sum / n;
    row.standard_error = std::sqrt(std::max(0.0, (sum_sq - n * row.measured * row.measured) / (n - 1.0)) / n);
    row.bound = r * r * spread;
    row.holds = row.measured <= row.bound + 5.0 * row.standard_error + 1e-15;
    rows.push_back(row);
  }
  return rows;
}

double fit_log_loss_slope(const Trajectory& t, std::size_t from) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::size_t n = 0;
  for (const auto& r : t.records) {
    if (r.iteration < from || !(r.loss > 0.0) || !std::isfinite(r.loss)) continue;
    const double xi = static_cast<double>(r.iteration), yi = std::log(r.loss);
    sx += xi;
    sy += yi;
    sxx += xi * xi;
    sxy += xi * yi;
    ++n;
  }
  require(n >= 2, "slope fit needs at least two positive records");
  const double nn = static_cast<double>(n);
  const double denom = nn * sxx - sx * sx;
  require(denom > 0.0, "slope fit needs distinct iterations");
  return (nn * sxy - sx * sy) / denom;
}

void Manifest::set(std::string key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

void Manifest::set(std::string key, double value) { set(std::move(key), csv::number(value)); }
void Manifest::set(std::string key, std::uint64_t value) { set(std::move(key), std::to_string(value)); }

void Manifest::add_profile(const std::string& prefix, const SpectralProfile& p) {
  set(prefix + "L", p.L);
  set(prefix + "mu", p.mu);
  set(prefix + "L1", p.L1);
  set(prefix + "kappa_tilde", p.kappa_tilde);
  set(prefix + "rank", static_cast<std::uint64_t>(p.rank));
}

void Manifest::write(const std::filesystem::path& path) const {
  auto out = open_for_write(path);
  for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
}

}  // namespace mass::experiments
