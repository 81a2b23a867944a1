#include "mass/nesterov_analysis.hpp"
#include "mass/optim.hpp"
#include "mass/problem.hpp"

#include <benchmark/benchmark.h>

#include <numeric>

namespace {

using namespace mass;

Vector random_vector(Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  Vector v(d);
  for (auto& x : v) x = rng.normal();
  return v;
}

void BM_StepMassPractical(benchmark::State& state) {
  const auto d = static_cast<Eigen::Index>(state.range(0));
  auto s = OptimizerState::at(random_vector(d, 1));
  const Vector g = 1e-6 * random_vector(d, 2);
  const HyperParamsPractical p{0.1, 0.05, 0.9};
  for (auto _ : state) {
    step_mass_practical(s, g, p);
    benchmark::DoNotOptimize(s.u.data());
  }
}
BENCHMARK(BM_StepMassPractical)->Arg(2)->Arg(48)->Arg(1024);

void BM_StepMassAnalytic(benchmark::State& state) {
  const auto d = static_cast<Eigen::Index>(state.range(0));
  auto s = OptimizerState::at(random_vector(d, 1));
  const Vector g = 1e-6 * random_vector(d, 2);
  const HyperParamsAnalytic p{0.1, 0.05, 1.0};
  for (auto _ : state) {
    step_mass_analytic(s, g, p);
    benchmark::DoNotOptimize(s.u.data());
  }
}
BENCHMARK(BM_StepMassAnalytic)->Arg(2)->Arg(48)->Arg(1024);

void BM_StepNesterov(benchmark::State& state) {
  const auto d = static_cast<Eigen::Index>(state.range(0));
  auto s = OptimizerState::at(random_vector(d, 1));
  const Vector g = 1e-6 * random_vector(d, 2);
  for (auto _ : state) {
    step_nesterov(s, g, 0.1, 0.9);
    benchmark::DoNotOptimize(s.u.data());
  }
}
BENCHMARK(BM_StepNesterov)->Arg(2)->Arg(48)->Arg(1024);

void BM_StochasticGradient(benchmark::State& state) {
  Vector cov = Vector::Ones(48);
  cov.tail(40).setConstant(std::ldexp(1.0, -10));
  const auto problem = gen_gaussian(cov, 2000, 3);
  const Vector w = random_vector(48, 4);
  std::vector<std::size_t> batch(static_cast<std::size_t>(state.range(0)));
  std::iota(batch.begin(), batch.end(), 0);
  Vector g;
  for (auto _ : state) {
    stochastic_gradient(problem, w, batch, g);
    benchmark::DoNotOptimize(g.data());
  }
}
BENCHMARK(BM_StochasticGradient)->Arg(1)->Arg(16)->Arg(128);

void BM_SpectralProfile(benchmark::State& state) {
  Vector cov = Vector::Ones(state.range(0));
  const auto problem = gen_gaussian(cov, 2000, 5);
  for (auto _ : state) benchmark::DoNotOptimize(spectral_profile(problem).L1);
}
BENCHMARK(BM_SpectralProfile)->Arg(3)->Arg(48)->Unit(benchmark::kMillisecond);

void BM_TransitionEigenvalues(benchmark::State& state) {
  const auto op = nesterov::transition_matrix(1.0, 1.0 / 6.0, 0.9);
  for (auto _ : state) benchmark::DoNotOptimize(nesterov::top_eigenvalue_magnitude(op));
}
BENCHMARK(BM_TransitionEigenvalues);

void BM_StepSizeThreshold(benchmark::State& state) {
  double u = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(nesterov::step_size_threshold(u));
    u = u < 0.9 ? u + 1e-3 : 0.1;
  }
}
BENCHMARK(BM_StepSizeThreshold);

}  // namespace

BENCHMARK_MAIN();
