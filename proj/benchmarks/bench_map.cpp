#include <benchmark/benchmark.h>

#include "forge/curve_checks.hpp"
#include "forge/dynamics.hpp"
#include "forge/orbits.hpp"

namespace {

const forge::BoundaryTable& ellipse_table() {
    static forge::BoundaryTable table = forge::make_table(forge::FourierCurve::ellipse(1.0, 0.5));
    return table;
}

void BM_Step(benchmark::State& state) {
    const auto& T = ellipse_table();
    const auto g = forge::AnnulusGuard::standard(T);
    forge::PhasePoint x{0.13, 0.4};
    for (auto _ : state) {
        auto y = forge::step(T, x, g).first;
        benchmark::DoNotOptimize(y);
    }
}
BENCHMARK(BM_Step);

void BM_Differential(benchmark::State& state) {
    const auto& T = ellipse_table();
    const auto g = forge::AnnulusGuard::standard(T);
    auto chord = forge::step(T, forge::PhasePoint{0.13, 0.4}, g).second;
    for (auto _ : state) {
        auto m = forge::differential(T, chord);
        benchmark::DoNotOptimize(m);
    }
}
BENCHMARK(BM_Differential);

void BM_BoundaryJet(benchmark::State& state) {
    const auto& T = ellipse_table();
    double s = 0.0;
    for (auto _ : state) {
        auto j = T.jet(s);
        benchmark::DoNotOptimize(j);
        s += 0.0137;
    }
}
BENCHMARK(BM_BoundaryJet);

void BM_MaximizerSearch(benchmark::State& state) {
    const auto& T = ellipse_table();
    const auto g = forge::AnnulusGuard::standard(T);
    const auto rot = forge::make_rotation(1, static_cast<int>(state.range(0)));
    for (auto _ : state) {
        auto r = forge::survey_maximizers(T, rot, g, 8 * rot.q, 7, 1);
        benchmark::DoNotOptimize(r);
    }
}
BENCHMARK(BM_MaximizerSearch)->Arg(2)->Arg(5);

} // namespace

BENCHMARK_MAIN();
