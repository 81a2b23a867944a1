#include "commands.hpp"

#include "svg_plot.hpp"

#include "mass/csv.hpp"
#include "mass/nesterov_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

namespace mass::cli {

namespace fs = std::filesystem;
using experiments::Manifest;

namespace {

std::ostream& log(const Context& ctx) { return *ctx.log; }

fs::path prepare_out(const Context& ctx) {
  fs::create_directories(ctx.out_dir);
  return ctx.out_dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool plots_enabled(const Context& ctx) { return ctx.config.flag("output.plots"); }

void add_population(Manifest& m, const LinearProblem& p) {
  if (!p.population()) return;
  const auto& c = *p.population();
  m.set("population.L", c.L);
  m.set("population.mu", c.mu);
  m.set("population.L1", c.L1);
  m.set("population.kappa_tilde", c.kappa_tilde);
}

void add_params(Manifest& m, const std::string& prefix, const HyperParamsPractical& p) {
  m.set(prefix + "eta1", p.eta1);
  m.set(prefix + "eta2", p.eta2);
  m.set(prefix + "gamma", p.gamma);
}

RunOptions run_options(const Config& c, BatchSize batch) {
  RunOptions o;
  o.sampling = batch.is_full() ? Sampling::full_batch : parse_sampling(c.text("run.sampling"));
  o.batch_size = batch.is_full() ? 1 : batch.count();
  o.max_iters = c.integer("run.max_iters");
  o.eval_every = c.integer("run.eval_every");
  o.target = make_target(c);
  return o;
}

/// Plot of loss against iteration, one series per trajectory CSV.
LinePlot loss_plot(const std::string& title) {
  LinePlot p;
  p.title = title;
  p.x_label = "iteration";
  p.y_label = "loss";
  p.log_y = true;
  return p;
}

Series series_from_trajectory(const Trajectory& t, const std::string& name) {
  Series s;
  s.name = name;
  for (const auto& r : t.records) {
    s.x.push_back(static_cast<double>(r.iteration));
    s.y.push_back(r.loss);
  }
  return s;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  }
  std::vector<double> numbers(int col) const {
    std::vector<double> out;
    for (const auto& r : rows) {
      const std::string& cell = r.at(static_cast<std::size_t>(col));
      out.push_back(cell.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(cell));
    }
    return out;
  }
};

CsvTable read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw UsageError(path.string() + " is empty");
  for (auto c : csv::split(csv::trim(line))) t.header.emplace_back(c);
  while (std::getline(in, line)) {
    if (csv::trim(line).empty()) continue;
    std::vector<std::string> row;
    for (auto c : csv::split(csv::trim(line))) row.emplace_back(csv::trim(c));
    if (row.size() != t.header.size()) throw UsageError(path.string() + ": ragged row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

LinePlot regime_plot(const std::vector<double>& m, const std::vector<double>& s, const std::vector<double>& theory) {
  LinePlot p;
  p.title = "speed-up against mini-batch size";
  p.x_label = "m";
  p.y_label = "s(m) / s(1)";
  p.log_x = p.log_y = true;
  Series measured{"measured", m, {}, false};
  Series overlay{"theory (scaled)", m, {}, true};
  Series linear{"linear", m, {}, true};
  const double s1 = s.empty() ? 1.0 : s.front();
  const double t1 = theory.empty() ? 1.0 : theory.front();
  for (std::size_t i = 0; i < m.size(); ++i) {
    measured.y.push_back(s1 > 0.0 ? s[i] / s1 : 0.0);
    overlay.y.push_back(theory[i] / t1);
    linear.y.push_back(m[i] / m.front());
  }
  p.series = {measured, overlay, linear};
  return p;
}

double max_rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

struct Check {
  std::string name;
  double value;
  double threshold;
  bool pass;
};

}  // namespace

BatchSize parse_batch(const std::string& text) {
  if (text == "full") return BatchSize::full();
  std::size_t m = 0;
  try {
    std::size_t used = 0;
    m = std::stoul(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw UsageError("run.batch: expected a positive integer or 'full', got '" + text + "'");
  }
  if (m == 0) throw UsageError("run.batch must be >= 1");
  return BatchSize::of(m);
}

LossTarget make_target(const Config& c) {
  const auto kind = c.text("run.target_kind");
  const double v = c.number("run.target");
  if (kind == "relative") return LossTarget::relative(v);
  if (kind == "absolute") return LossTarget::absolute(v);
  throw UsageError("run.target_kind must be relative or absolute");
}

LinearProblem make_problem(const Config& c) {
  const auto gen = c.text("dataset.generator");
  const auto n = c.integer("dataset.n");
  const auto seed = c.integer("dataset.seed");
  try {
    if (gen == "decoupled")
      return gen_component_decoupled(std::sqrt(c.number("dataset.sigma1_sq")), std::sqrt(c.number("dataset.sigma2_sq")),
                                     n, seed);
    if (gen == "gaussian") {
      const auto diag = c.numbers("dataset.cov_diagonal");
      return gen_gaussian(Eigen::Map<const Vector>(diag.data(), static_cast<Eigen::Index>(diag.size())), n, seed);
    }
    if (gen == "csv") return load_csv(c.resolve_path("dataset.path"), c.flag("dataset.has_header"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("dataset: ") + e.what());
  }
  throw UsageError("dataset.generator must be decoupled, gaussian or csv");
}

RunSpec make_run_spec(const Config& c, const SpectralProfile& profile, BatchSize batch) {
  RunSpec spec;
  try {
    spec.method = parse_method(c.text("method.name"));
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("method.name: ") + e.what());
  }
  const auto form = c.text("method.form");
  if (form == "practical")
    spec.mass_form = MassForm::practical;
  else if (form == "analytic")
    spec.mass_form = MassForm::analytic;
  else
    throw UsageError("method.form must be practical or analytic");

  const auto mode = c.text("method.params");
  if (mode == "manual") {
    spec.params = {c.number("method.eta1"), c.number("method.eta2"), c.number("method.gamma")};
  } else if (mode == "optimal") {
    const auto opt = optimal_hyperparams(profile, batch);
    switch (spec.method) {
      case Method::mass: spec.params = opt.practical; break;
      case Method::sgd: spec.params = {opt.analytic.eta, 0.0, 0.0}; break;
      default:
        throw UsageError("method.params = optimal is only defined for mass and sgd; use manual");
    }
  } else {
    throw UsageError("method.params must be optimal or manual");
  }
  try {
    validate(spec);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("method: ") + e.what());
  }
  return spec;
}

Manifest base_manifest(const Context& ctx, const std::string& command) {
  Manifest m;
  m.set("command", command);
  for (const auto& [k, v] : ctx.config.resolved()) m.set(k, v);
  m.set("output.dir", ctx.out_dir.string());
  m.set("run.jobs", static_cast<std::uint64_t>(ctx.jobs));
  return m;
}

int cmd_generate(const Context& ctx) {
  const auto& c = ctx.config;
  const auto problem = make_problem(c);
  const auto out = prepare_out(ctx);
  export_csv(problem, out / "dataset.csv");

  const auto prof = spectral_profile(problem);
  const auto batch = parse_batch(c.text("run.batch"));
  const auto bc = batch_constants(prof, batch);
  Manifest report;
  report.set("samples", static_cast<std::uint64_t>(problem.samples()));
  report.set("dim", static_cast<std::uint64_t>(problem.dim()));
  report.add_profile("empirical.", prof);
  report.set("empirical.kappa", prof.kappa());
  report.set("empirical.kappa1", prof.kappa1());
  add_population(report, problem);
  report.set("batch.L_m", bc.L_m);
  report.set("batch.kappa_m", bc.kappa_m);
  report.set("batch.kappa_tilde_m", bc.kappa_tilde_m);
  const auto [m1, m2] = experiments::critical_batch_sizes(prof.L, prof.L1, prof.kappa_tilde);
  report.set("empirical.m1_star", m1);
  report.set("empirical.m2_star", m2);
  report.write(out / "profile.txt");

  auto manifest = base_manifest(ctx, "generate");
  manifest.add_profile("profile.", prof);
  add_population(manifest, problem);
  manifest.write(out / "manifest.txt");

  log(ctx) << "wrote " << problem.samples() << " x " << problem.dim() << " dataset to "
           << (out / "dataset.csv").string() << "\n"
           << "L = " << csv::number(prof.L) << ", mu = " << csv::number(prof.mu) << ", L1 = " << csv::number(prof.L1)
           << ", kappa_tilde = " << csv::number(prof.kappa_tilde) << "\n";
  return kOk;
}

int cmd_run(const Context& ctx) {
  const auto& c = ctx.config;
  const auto problem = make_problem(c);
  const auto prof = spectral_profile(problem);
  const auto batch = parse_batch(c.text("run.batch"));
  const auto spec = make_run_spec(c, prof, batch);
  const auto repeats = c.integer("run.repeats");
  if (repeats == 0) throw UsageError("run.repeats must be >= 1");
  const auto out = prepare_out(ctx);
  const auto reference = make_reference(problem);

  auto manifest = base_manifest(ctx, "run");
  manifest.add_profile("profile.", prof);
  add_population(manifest, problem);
  add_params(manifest, "resolved.", spec.params);

  auto plot = loss_plot(std::string(to_string(spec.method)) + " loss");
  for (std::uint64_t r = 0; r < repeats; ++r) {
    auto opts = run_options(c, batch);
    opts.seed = derive_seed(c.integer("run.seed"), r);
    const auto traj = run(problem, reference ? &*reference : nullptr, spec, opts);
    const std::string stem = "trajectory_" + std::to_string(r);
    write_trajectory_csv(traj, out / (stem + ".csv"));
    write_trajectory_metadata(traj, out / (stem + ".meta"));
    manifest.set("seed." + std::to_string(r), opts.seed);
    const auto hit = traj.iterations_to_target();
    log(ctx) << stem << ": " << (traj.diverged ? "diverged" : hit ? "reached target" : "not reached")
             << " after " << traj.last().iteration << " iterations, loss " << csv::number(traj.last().loss) << "\n";
    plot.series.push_back(series_from_trajectory(traj, "seed " + std::to_string(r)));
  }
  manifest.write(out / "manifest.txt");
  if (plots_enabled(ctx)) plot.write(out / "loss.svg");
  return kOk;
}

int cmd_compare(const Context& ctx) {
  const auto& c = ctx.config;
  const auto problem = make_problem(c);
  experiments::ComparisonConfig cfg;
  cfg.batch = parse_batch(c.text("run.batch"));
  cfg.target = make_target(c);
  cfg.grid.eta_grid = experiments::log_space(c.number("grid.eta_min"), c.number("grid.eta_max"),
                                             c.integer("grid.eta_points"));
  cfg.grid.gamma_grid = c.numbers("grid.gammas");
  cfg.grid.repeats = c.integer("grid.repeats");
  cfg.seed = c.integer("run.seed");
  cfg.max_iters = c.integer("grid.max_iters");
  cfg.jobs = ctx.jobs;
  try {
    cfg.grid.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("grid: ") + e.what());
  }

  const auto result = experiments::compare_optimizers(problem, cfg);
  const auto out = prepare_out(ctx);
  experiments::write_comparison_csv(result, out / "comparison.csv");

  auto manifest = base_manifest(ctx, "compare");
  manifest.add_profile("profile.", result.profile);
  add_population(manifest, problem);
  for (std::uint64_t r = 0; r < cfg.grid.repeats; ++r)
    manifest.set("seed." + std::to_string(r), derive_seed(cfg.seed, r));
  for (const auto& m : result.methods) {
    const std::string key = "best." + std::string(to_string(m.method)) + ".";
    add_params(manifest, key, m.params);
    manifest.set(key + "median_iterations", m.median_iterations);
    manifest.set(key + "status", std::string(experiments::to_string(m.status)));
  }
  manifest.write(out / "manifest.txt");

  for (const auto& m : result.methods) {
    log(ctx) << to_string(m.method) << ": " << experiments::to_string(m.status) << ", median "
             << csv::number(m.median_iterations) << " iterations (eta1 = " << csv::number(m.params.eta1)
             << ", eta2 = " << csv::number(m.params.eta2) << ", gamma = " << csv::number(m.params.gamma) << ")\n";
  }

  if (plots_enabled(ctx)) {
    // One representative run per method at its best cell, on repeat 0's seed.
    const auto reference = make_reference(problem);
    double horizon = 0.0;
    for (const auto& m : result.methods)
      if (std::isfinite(m.median_iterations)) horizon = std::max(horizon, m.median_iterations);
    auto plot = loss_plot("grid-best baselines against MaSS");
    for (const auto& m : result.methods) {
      RunOptions o;
      o.sampling = cfg.batch.is_full() ? Sampling::full_batch : Sampling::with_replacement;
      o.batch_size = cfg.batch.is_full() ? 1 : cfg.batch.count();
      o.max_iters = static_cast<std::size_t>(std::max(horizon, 1.0));
      o.eval_every = std::max<std::size_t>(1, o.max_iters / 500);
      o.seed = derive_seed(cfg.seed, 0);
      const auto traj = run(problem, reference ? &*reference : nullptr, {m.method, m.params}, o);
      plot.series.push_back(series_from_trajectory(traj, std::string(to_string(m.method))));
    }
    plot.write(out / "comparison.svg");
  }
  return kOk;
}

int cmd_regimes(const Context& ctx) {
  const auto& c = ctx.config;
  const auto problem = make_problem(c);
  experiments::RegimeConfig cfg;
  cfg.m_list = c.integers("regimes.m_list");
  cfg.target = make_target(c);
  cfg.seed = c.integer("run.seed");
  cfg.repeats = c.integer("regimes.repeats");
  cfg.max_iters = c.integer("regimes.max_iters");
  cfg.jobs = ctx.jobs;
  if (cfg.m_list.empty()) throw UsageError("regimes.m_list is empty");

  const auto report = experiments::regime_sweep(problem, cfg);
  const auto out = prepare_out(ctx);
  experiments::write_regime_csv(report, out / "regimes.csv");

  auto manifest = base_manifest(ctx, "regimes");
  manifest.add_profile("profile.", spectral_profile(problem));
  add_population(manifest, problem);
  manifest.set("m1_star", report.m1_star);
  manifest.set("m2_star", report.m2_star);
  manifest.set("critical_sizes_from", std::string(report.population_constants ? "population" : "empirical"));
  manifest.write(out / "manifest.txt");

  log(ctx) << "m1* = " << csv::number(report.m1_star) << ", m2* = " << csv::number(report.m2_star) << "\n";
  std::vector<double> ms, s, theory;
  for (const auto& r : report.rows) {
    log(ctx) << "m = " << r.m << ": s(m) = " << csv::number(r.s_m) << ", median "
             << csv::number(r.median_iterations) << " iterations\n";
    ms.push_back(static_cast<double>(r.m));
    s.push_back(r.s_m);
    theory.push_back(r.theory_speed);
  }
  if (plots_enabled(ctx)) regime_plot(ms, s, theory).write(out / "regimes.svg");
  return kOk;
}

int cmd_nesterov_phase(const Context& ctx) {
  const auto& c = ctx.config;
  const double s1 = c.number("phase.sigma1_sq"), s2 = c.number("phase.sigma2_sq");
  const auto u_points = c.integer("phase.u_points");
  const double u_lo = c.number("phase.u_min"), u_hi = c.number("phase.u_max");
  if (u_points < 1 || !(u_lo > 0.0 && u_hi < 1.0 && u_lo <= u_hi))
    throw UsageError("phase: need 0 < u_min <= u_max < 1 and u_points >= 1");
  std::vector<double> u_grid(u_points);
  for (std::size_t i = 0; i < u_points; ++i)
    u_grid[i] = u_points == 1 ? u_lo : u_lo + (u_hi - u_lo) * static_cast<double>(i) / static_cast<double>(u_points - 1);
  const auto eta_grid =
      experiments::log_space(c.number("phase.eta_min"), c.number("phase.eta_max"), c.integer("phase.eta_points"));

  const auto rows = nesterov::phase_diagram(s1, s2, u_grid, eta_grid);
  const auto out = prepare_out(ctx);
  nesterov::write_phase_csv(rows, out / "phase.csv");

  {
    std::ofstream f(out / "threshold.csv");
    if (!f) throw std::runtime_error("cannot write threshold.csv");
    f << "u,eta0\n";
    for (double u : u_grid) f << csv::number(u) << ',' << csv::number(nesterov::step_size_threshold(u) / s1) << '\n';
  }
  base_manifest(ctx, "nesterov-phase").write(out / "manifest.txt");

  std::size_t diverging = 0;
  for (const auto& r : rows) diverging += r.verdict == nesterov::Verdict::diverges;
  log(ctx) << rows.size() << " settings, " << diverging << " diverge in second moment\n";

  if (plots_enabled(ctx)) {
    LinePlot p;
    p.title = "SGD+Nesterov step-size threshold";
    p.x_label = "u = 1 - gamma";
    p.y_label = "eta";
    Series th{"eta0(u)", u_grid, {}, false};
    Series asym{"2u/3", u_grid, {}, true};
    for (double u : u_grid) {
      th.y.push_back(nesterov::step_size_threshold(u) / s1);
      asym.y.push_back(2.0 * u / 3.0 / s1);
    }
    p.series = {th, asym};
    p.write(out / "phase.svg");
  }
  return kOk;
}

int cmd_verify(const Context& ctx) {
  const auto& c = ctx.config;
  const auto problem = make_problem(c);
  const auto prof = spectral_profile(problem);
  const auto batch = parse_batch(c.text("run.batch"));
  const auto opt = optimal_hyperparams(prof, batch);
  const auto seed = c.integer("run.seed");
  const auto out = prepare_out(ctx);
  std::vector<Check> checks;

  {
    experiments::LyapunovConfig cfg;
    cfg.batch = batch;
    cfg.t_max = c.integer("verify.lyapunov_t_max");
    cfg.n_seeds = c.integer("verify.lyapunov_seeds");
    cfg.seed = seed;
    const auto rows = experiments::lyapunov_suite(problem, opt.analytic, cfg);
    double failing = 0;
    for (const auto& r : rows) failing += !r.holds;
    checks.push_back({"lyapunov_stochastic", failing, 0.0, failing == 0});

    const auto full = optimal_hyperparams(prof, BatchSize::full());
    experiments::LyapunovConfig fcfg;
    fcfg.batch = BatchSize::full();
    fcfg.t_max = cfg.t_max;
    fcfg.n_seeds = 4;
    fcfg.seed = seed;
    failing = 0;
    for (const auto& r : experiments::lyapunov_suite(problem, full.analytic, fcfg)) failing += !r.holds;
    checks.push_back({"lyapunov_full_batch", failing, 0.0, failing == 0});
  }
  {
    const auto rows = experiments::avr_suite(problem, c.numbers("verify.avr_radii"), c.integer("verify.avr_samples"),
                                             seed, batch.is_full() ? 1 : batch.count());
    double failing = 0;
    for (const auto& r : rows) failing += !r.holds;
    checks.push_back({"avr_bound", failing, 0.0, failing == 0});
  }
  {
    const auto back = to_analytic(opt.practical);
    const double err = std::max({max_rel(back.eta, opt.analytic.eta), max_rel(back.alpha, opt.analytic.alpha),
                                 max_rel(back.delta, opt.analytic.delta)});
    checks.push_back({"bijection_round_trip", err, 1e-14, err <= 1e-14});
  }
  {
    // Both forms driven by the same sampled batches.
    const auto steps = c.integer("verify.equivalence_steps");
    Rng rng = Rng(seed).split(7);
    Vector w0(static_cast<Eigen::Index>(problem.dim()));
    for (auto& x : w0) x = rng.normal();
    auto sp = OptimizerState::at(w0), sa = OptimizerState::at(w0);
    const auto m = batch.is_full() ? problem.samples() : batch.count();
    std::vector<std::size_t> idx(m);
    Vector gp, ga;
    double err = 0.0;
    for (std::uint64_t t = 0; t < steps; ++t) {
      if (batch.is_full())
        for (std::size_t i = 0; i < m; ++i) idx[i] = i;
      else
        for (auto& i : idx) i = rng.index(problem.samples());
      stochastic_gradient(problem, sp.u, idx, gp);
      stochastic_gradient(problem, sa.u, idx, ga);
      step_mass_practical(sp, gp, opt.practical);
      step_mass_analytic(sa, ga, opt.analytic);
      err = std::max(err, (sp.w - sa.w).norm() / std::max(1.0, sa.w.norm()));
    }
    checks.push_back({"practical_analytic_equivalence", err, 1e-10, err <= 1e-10});
  }
  {
    RunOptions o = run_options(c, batch);
    o.seed = seed;
    o.max_iters = std::min<std::size_t>(o.max_iters, 2000);
    const RunSpec spec{Method::mass, opt.practical};
    const auto a = out / "rerun_a.csv", b = out / "rerun_b.csv";
    write_trajectory_csv(run(problem, spec, o), a);
    write_trajectory_csv(run(problem, spec, o), b);
    const bool same = slurp(a) == slurp(b);
    fs::remove(a);
    fs::remove(b);
    checks.push_back({"byte_identical_rerun", same ? 0.0 : 1.0, 0.0, same});
  }

  {
    std::ofstream f(out / "verify.csv");
    if (!f) throw std::runtime_error("cannot write verify.csv");
    f << "check,value,threshold,pass\n";
    for (const auto& ch : checks)
      f << ch.name << ',' << csv::number(ch.value) << ',' << csv::number(ch.threshold) << ','
        << (ch.pass ? "true" : "false") << '\n';
  }
  auto manifest = base_manifest(ctx, "verify");
  manifest.add_profile("profile.", prof);
  add_params(manifest, "optimal.", opt.practical);
  manifest.write(out / "manifest.txt");

  bool all = true;
  for (const auto& ch : checks) {
    log(ctx) << (ch.pass ? "PASS " : "FAIL ") << ch.name << " (value " << csv::number(ch.value) << ", threshold "
             << csv::number(ch.threshold) << ")\n";
    all = all && ch.pass;
  }
  return all ? kOk : kFailed;
}

int cmd_plot(const std::vector<fs::path>& csv_paths, const Context& ctx) {
  if (csv_paths.empty()) throw UsageError("plot needs at least one CSV path");
  for (const auto& path : csv_paths) {
    const auto table = read_table(path);
    auto target = path;
    target.replace_extension(".svg");
    if (const int it = table.column("iteration"), loss = table.column("loss"); it >= 0 && loss >= 0) {
      auto p = loss_plot(path.stem().string());
      p.series.push_back({"loss", table.numbers(it), table.numbers(loss), false});
      p.write(target);
    } else if (const int m = table.column("m"), s = table.column("s_m"), th = table.column("theory_speed");
               m >= 0 && s >= 0 && th >= 0) {
      regime_plot(table.numbers(m), table.numbers(s), table.numbers(th)).write(target);
    } else {
      throw UsageError(path.string() + ": not a trajectory or regime CSV");
    }
    log(ctx) << "wrote " << target.string() << "\n";
  }
  return kOk;
}

}  // namespace mass::cli
