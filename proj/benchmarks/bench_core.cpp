#include <benchmark/benchmark.h>

#include "weakid/djtest.hpp"
#include "weakid/estimators.hpp"
#include "weakid/montecarlo.hpp"

using namespace weakid;

namespace {

Dataset draw(Eigen::Index n, double lambda) {
  McDesign d;
  d.n = n;
  d.lambda = lambda;
  d.rho = 0.95;
  RngStream s = replication_stream(d, 0);
  return generate(d, s);
}

void BM_CuObjectiveValue(benchmark::State& state) {
  const Dataset data = draw(state.range(0), 0.2);
  CuObjective obj(default_instruments(data, InstrumentSpec::MonteCarlo), data);
  const Vector x = fit_2scml(data).theta_hat.flat();
  for (auto _ : state) benchmark::DoNotOptimize(obj.value(x));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CuObjectiveValue)->Arg(500)->Arg(5000)->Arg(10000)->Complexity();

void BM_CuObjectiveGradient(benchmark::State& state) {
  const Dataset data = draw(state.range(0), 0.2);
  CuObjective obj(default_instruments(data, InstrumentSpec::MonteCarlo), data);
  const Vector x = fit_2scml(data).theta_hat.flat();
  Vector g(x.size());
  for (auto _ : state) benchmark::DoNotOptimize(obj.value_and_gradient(x, g));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CuObjectiveGradient)->Arg(500)->Arg(5000)->Arg(10000)->Complexity();

void BM_Fit2scml(benchmark::State& state) {
  const Dataset data = draw(state.range(0), 0.2);
  for (auto _ : state) benchmark::DoNotOptimize(fit_2scml(data));
}
BENCHMARK(BM_Fit2scml)->Arg(500)->Arg(10000);

void BM_FitCugmm(benchmark::State& state) {
  const Dataset data = draw(state.range(0), 0.2);
  const MomentSystem sys = default_instruments(data, InstrumentSpec::MonteCarlo);
  const ParamTheta init = fit_2scml(data).theta_hat;
  for (auto _ : state) benchmark::DoNotOptimize(fit_cugmm(sys, data, init));
}
BENCHMARK(BM_FitCugmm)->Arg(500)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_Replication(benchmark::State& state) {
  McDesign d;
  d.n = state.range(0);
  d.lambda = 0.3;
  d.rho = 0.95;
  std::size_t index = 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_replication(d, index++));
}
BENCHMARK(BM_Replication)->Arg(500)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
