// Serial reference vs OpenMP kernels. Arg 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include "bayescv/conjlinear.hpp"
#include "bayescv/exact_scorer.hpp"
#include "bayescv/mc_scorer.hpp"
#include "bayescv/probit.hpp"

using namespace bayescv;

namespace {

conjlinear::ConjugateLinearModel polynomial(int n, int degree) {
  conjlinear::SimulationSpec sim;
  sim.n = n;
  const auto data = conjlinear::simulate_polynomial(sim, 1);
  conjlinear::PolynomialSpec spec;
  spec.degree = degree;
  return {data.x, data.y, spec};
}

Exec exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Exec::serial : Exec::parallel;
}

void BM_decompose_marginal(benchmark::State& state) {
  const auto model = polynomial(16, 2);
  for (auto _ : state) benchmark::DoNotOptimize(exact::decompose_marginal(model, exec_of(state)));
}
BENCHMARK(BM_decompose_marginal)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_leave_p_out(benchmark::State& state) {
  const auto model = polynomial(18, 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(exact::leave_p_out_score(model, 9, exec_of(state)));
}
BENCHMARK(BM_leave_p_out)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ccv_exact_inner(benchmark::State& state) {
  const auto model = polynomial(100, 2);
  mc::McOptions o;
  o.splits = 2000;
  o.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(mc::estimate_ccv_exact_inner(model, 90, o));
}
BENCHMARK(BM_ccv_exact_inner)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ccv_probit(benchmark::State& state) {
  const Dataset ds = probit::simulate_probit({}, 1);
  const std::string cols[] = {"glu", "bp", "ped"};
  const probit::ProbitData data = probit::ProbitData::from_dataset(ds, cols);
  mc::McOptions o;
  o.splits = 32;
  o.exec = exec_of(state);
  for (auto _ : state)
    benchmark::DoNotOptimize(probit::ccv_probit(data, {332.0}, 298, 500, o));
}
BENCHMARK(BM_ccv_probit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
