// Serial reference vs OpenMP stratified bootstrap on simulated studies.

#include <benchmark/benchmark.h>

#include "errcal/bootstrap.hpp"
#include "errcal/simulate.hpp"

using namespace errcal;

namespace {

const GeneratedStudy& study(SimDesign d) {
    static const GeneratedStudy icvs = generate(Scenario::preset(SimDesign::internal_covariate));
    static const GeneratedStudy rs = generate(Scenario::preset(SimDesign::replicates));
    return d == SimDesign::replicates ? rs : icvs;
}

Method method_of(SimDesign d) { return d == SimDesign::replicates ? Method::mle : Method::standard; }

void bm_serial(benchmark::State& state, SimDesign d) {
    const GeneratedStudy& g = study(d);
    const auto B = static_cast<std::size_t>(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(stratified_bootstrap_serial(g.data, g.spec, method_of(d), B, 1, 0.05));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_openmp(benchmark::State& state, SimDesign d) {
    const GeneratedStudy& g = study(d);
    const auto B = static_cast<std::size_t>(state.range(0));
    const int workers = static_cast<int>(state.range(1));
    for (auto _ : state)
        benchmark::DoNotOptimize(stratified_bootstrap(g.data, g.spec, method_of(d), B, 1, 0.05, workers));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

} // namespace

BENCHMARK_CAPTURE(bm_serial, icvs_rc, SimDesign::internal_covariate)->Arg(999)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_openmp, icvs_rc, SimDesign::internal_covariate)
    ->ArgsProduct({{999}, {1, 2, 4, 8}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();
BENCHMARK_CAPTURE(bm_serial, rs_mle, SimDesign::replicates)->Arg(999)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_openmp, rs_mle, SimDesign::replicates)
    ->ArgsProduct({{999}, {1, 2, 4, 8}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

BENCHMARK_MAIN();
