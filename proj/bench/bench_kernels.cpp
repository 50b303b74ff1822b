// Serial reference vs OpenMP kernels. Thread count is the benchmark argument;
// the serial variants ignore it and serve as the baseline row.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "dynimp/kernels.hpp"

using namespace dynimp;

namespace {

std::vector<Window> make_windows(std::size_t n) {
    SyntheticSpec spec;
    spec.users = 4;
    spec.minutes = n * 24 / 4;
    auto d = generate_synthetic(spec);
    apply_scaling(d, fit_scaling(d, ScalingMode::minmax));
    return inject_missingness(d, 0.3, 7).first.windows;
}

const std::vector<Window>& windows() {
    static const auto ws = make_windows(480);
    return ws;
}

DynImpModel model() {
    DynImpConfig cfg;
    cfg.hidden = 32;
    return make_model(windows().front().values.cols(), cfg, 1);
}

std::vector<std::size_t> all_members() {
    std::vector<std::size_t> m(windows().size());
    std::iota(m.begin(), m.end(), 0);
    return m;
}

void BM_BatchGradientSerial(benchmark::State& state) {
    const auto m = model();
    const auto members = all_members();
    for (auto _ : state) benchmark::DoNotOptimize(serial::batch_gradient(m, windows(), members, 1));
}

void BM_BatchGradientParallel(benchmark::State& state) {
    set_threads(static_cast<int>(state.range(0)));
    const auto m = model();
    const auto members = all_members();
    for (auto _ : state) benchmark::DoNotOptimize(parallel::batch_gradient(m, windows(), members, 1));
}

void BM_KnnImputeSerial(benchmark::State& state) {
    const std::vector<double> means(windows().front().values.cols(), 0.5);
    for (auto _ : state) benchmark::DoNotOptimize(serial::impute_all(windows(), ImputerKind::knn, means, 5));
}

void BM_KnnImputeParallel(benchmark::State& state) {
    set_threads(static_cast<int>(state.range(0)));
    const std::vector<double> means(windows().front().values.cols(), 0.5);
    for (auto _ : state) benchmark::DoNotOptimize(parallel::impute_all(windows(), ImputerKind::knn, means, 5));
}

void BM_ModelImputeSerial(benchmark::State& state) {
    const auto m = model();
    for (auto _ : state) benchmark::DoNotOptimize(serial::impute_all(m, windows()));
}

void BM_ModelImputeParallel(benchmark::State& state) {
    set_threads(static_cast<int>(state.range(0)));
    const auto m = model();
    for (auto _ : state) benchmark::DoNotOptimize(parallel::impute_all(m, windows()));
}

}  // namespace

BENCHMARK(BM_BatchGradientSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchGradientParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_KnnImputeSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KnnImputeParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ModelImputeSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ModelImputeParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
