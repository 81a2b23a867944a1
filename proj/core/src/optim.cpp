#include "mass/optim.hpp"

#include "mass/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace mass {

namespace {

constexpr double kConditionTolerance = 1e-12;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

/// Draws mini-batch indices for one run.
class BatchSampler {
 public:
  BatchSampler(Sampling mode, std::size_t n, std::size_t m, Rng rng)
      : mode_(mode), n_(n), rng_(std::move(rng)), batch_(m) {
    if (mode_ == Sampling::without_replacement) {
      require(m <= n, "without-replacement sampling needs batch_size <= n");
      permutation_.resize(n);
      std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
      cursor_ = n;  // forces a shuffle on first draw
    }
  }

  std::span<const std::size_t> draw() {
    if (mode_ == Sampling::with_replacement) {
      for (auto& i : batch_) i = rng_.index(n_);
    } else {
      for (auto& i : batch_) {
        if (cursor_ == n_) {
          std::shuffle(permutation_.begin(), permutation_.end(), rng_);
          cursor_ = 0;
        }
        i = permutation_[cursor_++];
      }
    }
    return batch_;
  }

 private:
  Sampling mode_;
  std::size_t n_;
  Rng rng_;
  std::vector<std::size_t> batch_;
  std::vector<std::size_t> permutation_;
  std::size_t cursor_ = 0;
};

}  // namespace

HyperParamsAnalytic to_analytic(const HyperParamsPractical& p) {
  require(p.eta1 > 0.0 && std::isfinite(p.eta1), "eta1 must be positive");
  require(p.gamma >= 0.0 && p.gamma < 1.0, "gamma must lie in [0, 1)");
  HyperParamsAnalytic a;
  a.eta = p.eta1;
  a.alpha = (1.0 - p.gamma) / (1.0 + p.gamma);
  a.delta = (p.eta1 - p.eta2 * (1.0 + a.alpha)) / a.alpha;
  require(a.delta > 0.0, "practical parameters map to a non-positive delta");
  return a;
}

HyperParamsPractical to_practical(const HyperParamsAnalytic& p) {
  require(p.eta > 0.0 && std::isfinite(p.eta), "eta must be positive");
  require(p.alpha > 0.0 && p.alpha <= 1.0, "alpha must lie in (0, 1]");
  require(p.delta > 0.0, "delta must be positive");
  HyperParamsPractical q;
  q.eta1 = p.eta;
  q.gamma = (1.0 - p.alpha) / (1.0 + p.alpha);
  q.eta2 = (p.eta - p.alpha * p.delta) / (1.0 + p.alpha);
  return q;
}

OptimalHyperParams optimal_hyperparams(const SpectralProfile& profile, BatchSize m) {
  require(profile.mu > 0.0 && profile.L >= profile.mu, "invalid spectral profile");
  const BatchConstants c = batch_constants(profile, m);
  const double root = std::sqrt(c.kappa_m * c.kappa_tilde_m);
  OptimalHyperParams out;
  out.analytic.eta = 1.0 / c.L_m;
  out.analytic.alpha = 1.0 / root;
  out.analytic.delta = out.analytic.eta / (out.analytic.alpha * c.kappa_tilde_m);
  out.practical.eta1 = out.analytic.eta;
  out.practical.eta2 = out.analytic.eta * root / (root + 1.0) * (1.0 - 1.0 / c.kappa_tilde_m);
  out.practical.gamma = (root - 1.0) / (root + 1.0);
  return out;
}

ConvergenceReport check_convergence_conditions(const HyperParamsAnalytic& p, const SpectralProfile& profile,
                                               BatchSize m) {
  const BatchConstants c = batch_constants(profile, m);
  ConvergenceReport r;
  r.slack_averaging = p.alpha / p.delta - profile.mu;
  const double coupling = p.alpha * p.delta * c.kappa_tilde_m;
  r.slack_step = coupling + p.eta * (p.eta * c.L_m - 2.0);
  const double tol_step = kConditionTolerance * (coupling + p.eta * (p.eta * c.L_m + 2.0));
  r.satisfied = p.eta > 0.0 && p.alpha > 0.0 && p.delta > 0.0 &&
                r.slack_averaging <= kConditionTolerance * profile.mu && r.slack_step <= tol_step;
  return r;
}

void stochastic_gradient(const LinearProblem& problem, const Vector& w, std::span<const std::size_t> batch,
                         Vector& out) {
  require(!batch.empty(), "empty batch");
  const Matrix& x = problem.features();
  const Vector& y = problem.targets();
  out.setZero(x.cols());
  for (const std::size_t i : batch) {
    require(i < problem.samples(), "batch index out of range");
    const auto row = x.row(static_cast<Eigen::Index>(i));
    const double residual = row.dot(w) - y(static_cast<Eigen::Index>(i));
    out.noalias() += residual * row.transpose();
  }
  out /= static_cast<double>(batch.size());
}

Vector stochastic_gradient(const LinearProblem& problem, const Vector& w, std::span<const std::size_t> batch) {
  Vector g;
  stochastic_gradient(problem, w, batch, g);
  return g;
}

void step_mass_analytic(OptimizerState& s, const Vector& grad_at_u, const HyperParamsAnalytic& p) {
  s.w_prev = s.w;
  s.w = s.u - p.eta * grad_at_u;
  s.v = (1.0 - p.alpha) * s.v + p.alpha * s.u - p.delta * grad_at_u;
  s.u = (p.alpha / (1.0 + p.alpha)) * s.v + (1.0 / (1.0 + p.alpha)) * s.w;
  ++s.iteration;
}

void step_mass_practical(OptimizerState& s, const Vector& grad_at_u, const HyperParamsPractical& p) {
  s.w_prev = s.w;
  s.w = s.u - p.eta1 * grad_at_u;
  s.u = (1.0 + p.gamma) * s.w - p.gamma * s.w_prev + p.eta2 * grad_at_u;
  ++s.iteration;
}

void step_sgd(OptimizerState& s, const Vector& grad, double eta) {
  s.w_prev = s.w;
  s.w -= eta * grad;
  s.u = s.w;
  ++s.iteration;
}

void step_nesterov(OptimizerState& s, const Vector& grad_at_u, double eta, double gamma) {
  s.w_prev = s.w;
  s.w = s.u - eta * grad_at_u;
  s.u = (1.0 + gamma) * s.w - gamma * s.w_prev;
  ++s.iteration;
}

void step_heavy_ball(OptimizerState& s, const Vector& grad_at_w, double eta, double gamma) {
  s.u = s.w - eta * grad_at_w + gamma * (s.w - s.w_prev);
  s.w_prev.swap(s.w);
  s.w.swap(s.u);
  s.u = s.w;
  ++s.iteration;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::sgd: return "sgd";
    case Method::nesterov: return "nesterov";
    case Method::heavy_ball: return "heavy_ball";
    case Method::mass: return "mass";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  if (text == "sgd") return Method::sgd;
  if (text == "nesterov") return Method::nesterov;
  if (text == "heavy_ball" || text == "hb") return Method::heavy_ball;
  if (text == "mass") return Method::mass;
  throw std::invalid_argument("unknown method '" + std::string(text) + "'");
}

std::string_view to_string(Sampling s) {
  switch (s) {
    case Sampling::with_replacement: return "with_replacement";
    case Sampling::without_replacement: return "without_replacement";
    case Sampling::full_batch: return "full_batch";
  }
  return "unknown";
}

Sampling parse_sampling(std::string_view text) {
  if (text == "with_replacement") return Sampling::with_replacement;
  if (text == "without_replacement") return Sampling::without_replacement;
  if (text == "full_batch" || text == "full") return Sampling::full_batch;
  throw std::invalid_argument("unknown sampling '" + std::string(text) + "'");
}

std::optional<std::size_t> Trajectory::iterations_to_target() const {
  if (!reached_target) return std::nullopt;
  return records.back().iteration;
}

void validate(const RunSpec& spec) {
  const auto& p = spec.params;
  require(p.eta1 >= 0.0 && std::isfinite(p.eta1), "step size must be finite and non-negative");
  require(p.gamma >= 0.0 && p.gamma < 1.0, "momentum gamma must lie in [0, 1)");
  require(std::isfinite(p.eta2), "eta2 must be finite");
  switch (spec.method) {
    case Method::sgd:
      require(p.gamma == 0.0 && p.eta2 == 0.0, "sgd takes only a step size");
      break;
    case Method::nesterov:
    case Method::heavy_ball:
      require(p.eta2 == 0.0, "eta2 applies to mass only");
      break;
    case Method::mass:
      if (spec.mass_form == MassForm::analytic) (void)to_analytic(p);
      break;
  }
}

double lyapunov_value(const Reference& ref, const Vector& w, const Vector& v, const HyperParamsAnalytic& p) {
  return ref.pinv_norm_sq(v) + (p.delta / p.alpha) * ref.dist_sq(w);
}

Trajectory run(const LinearProblem& problem, const RunSpec& spec, const RunOptions& options) {
  const auto reference = make_reference(problem);
  return run(problem, reference ? &*reference : nullptr, spec, options);
}

Trajectory run(const LinearProblem& problem, const Reference* reference, const RunSpec& spec,
               const RunOptions& options) {
  validate(spec);
  require(options.max_iters >= 1, "max_iters must be >= 1");
  require(options.eval_every >= 1, "eval_every must be >= 1");
  require(options.batch_size >= 1, "batch_size must be >= 1");

  const auto d = static_cast<Eigen::Index>(problem.dim());
  Rng root(options.seed);
  Rng init_rng = root.split(0);

  Vector w0(d);
  if (options.initial_point) {
    require(options.initial_point->size() == d, "initial point has wrong dimension");
    w0 = *options.initial_point;
  } else {
    for (Eigen::Index j = 0; j < d; ++j) w0(j) = init_rng.normal();
  }

  std::optional<HyperParamsAnalytic> analytic;
  if (spec.method == Method::mass) {
    try {
      analytic = to_analytic(spec.params);
    } catch (const std::invalid_argument&) {
      analytic.reset();
    }
  }

  Trajectory traj;
  traj.spec = spec;
  traj.options = options;

  OptimizerState state = OptimizerState::at(w0);
  auto current_loss = [&] { return reference ? reference->loss(state.w) : empirical_loss(problem, state.w); };
  auto make_record = [&](std::size_t t, double loss) {
    TrajectoryRecord r;
    r.iteration = t;
    r.loss = loss;
    if (reference) {
      r.dist_sq = reference->dist_sq(state.w);
      if (analytic) {
        const Vector v = spec.mass_form == MassForm::analytic
                             ? state.v
                             : Vector(((1.0 + analytic->alpha) * state.u - state.w) / analytic->alpha);
        r.lyapunov = lyapunov_value(*reference, state.w, v, *analytic);
      }
    }
    return r;
  };

  traj.records.push_back(make_record(0, current_loss()));
  const double initial = traj.records.front().loss;
  const double threshold = kDivergenceFactor * (initial + 1.0);
  const double target = options.target ? options.target->resolve(initial) : -1.0;
  if (!std::isfinite(initial)) {
    traj.diverged = true;
    return traj;
  }
  if (options.target && initial <= target) {
    traj.reached_target = true;
    return traj;
  }

  BatchSampler sampler(options.sampling == Sampling::full_batch ? Sampling::with_replacement : options.sampling,
                       problem.samples(), options.batch_size, root.split(1));
  Vector grad(d);
  auto gradient_at = [&](const Vector& point) {
    if (options.sampling == Sampling::full_batch)
      grad = full_gradient(problem, point);
    else
      stochastic_gradient(problem, point, sampler.draw(), grad);
  };

  for (std::size_t t = 1; t <= options.max_iters; ++t) {
    switch (spec.method) {
      case Method::sgd:
        gradient_at(state.w);
        step_sgd(state, grad, spec.params.eta1);
        break;
      case Method::heavy_ball:
        gradient_at(state.w);
        step_heavy_ball(state, grad, spec.params.eta1, spec.params.gamma);
        break;
      case Method::nesterov:
        gradient_at(state.u);
        step_nesterov(state, grad, spec.params.eta1, spec.params.gamma);
        break;
      case Method::mass:
        gradient_at(state.u);
        if (spec.mass_form == MassForm::analytic)
          step_mass_analytic(state, grad, *analytic);
        else
          step_mass_practical(state, grad, spec.params);
        break;
    }

    const bool last = t == options.max_iters;
    if (t % options.eval_every != 0 && !last) continue;
    const double loss = current_loss();
    const bool diverged = !std::isfinite(loss) || loss > threshold;
    const bool reached = !diverged && options.target && loss <= target;
    if (options.keep_records || diverged || reached || last) traj.records.push_back(make_record(t, loss));
    if (diverged) {
      traj.diverged = true;
      break;
    }
    if (reached) {
      traj.reached_target = true;
      break;
    }
  }
  return traj;
}

void write_trajectory_csv(const Trajectory& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iteration,loss,dist_sq,lyapunov\n";
  for (const auto& r : t.records) {
    out << r.iteration << ',' << csv::number(r.loss) << ',' << csv::cell(r.dist_sq) << ','
        << csv::cell(r.lyapunov) << '\n';
  }
}

void write_trajectory_metadata(const Trajectory& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto& o = t.options;
  out << "method = " << to_string(t.spec.method) << '\n'
      << "mass_form = " << (t.spec.mass_form == MassForm::analytic ? "analytic" : "practical") << '\n'
      << "eta1 = " << csv::number(t.spec.params.eta1) << '\n'
      << "eta2 = " << csv::number(t.spec.params.eta2) << '\n'
      << "gamma = " << csv::number(t.spec.params.gamma) << '\n'
      << "batch_size = " << o.batch_size << '\n'
      << "sampling = " << to_string(o.sampling) << '\n'
      << "seed = " << o.seed << '\n'
      << "max_iters = " << o.max_iters << '\n'
      << "eval_every = " << o.eval_every << '\n';
  if (o.target)
    out << "target = " << csv::number(o.target->value()) << (o.target->is_relative() ? " (relative)" : "")
        << '\n';
  out << "diverged = " << (t.diverged ? "true" : "false") << '\n'
      << "reached_target = " << (t.reached_target ? "true" : "false") << '\n'
      << "final_iteration = " << t.last().iteration << '\n';
}

}  // namespace mass
