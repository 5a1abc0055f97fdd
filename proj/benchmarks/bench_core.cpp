#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <benchmark/benchmark.h>

#include "fractal_avoid/avoidance.hpp"
#include "fractal_avoid/configs.hpp"
#include "fractal_avoid/fourier.hpp"
#include "fractal_avoid/measure.hpp"
#include "fractal_avoid/verify.hpp"

namespace {

using fav::BranchingSchedule;
using fav::coord_t;
using fav::GridKind;
using fav::GridSet;

GridSet random_pairs(coord_t D, int count, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::set<std::pair<coord_t, coord_t>> picked;
    while (static_cast<int>(picked.size()) < count) {
        const auto a = static_cast<coord_t>(gen() % static_cast<std::uint64_t>(D));
        const auto b = static_cast<coord_t>(gen() % static_cast<std::uint64_t>(D));
        if (a != b) picked.insert({a, b});
    }
    std::vector<coord_t> flat;
    for (auto [a, b] : picked) flat.insert(flat.end(), {a, b});
    return GridSet(1, 2, 1, GridKind::DQ, D, std::move(flat));
}

void BM_AvoidStep(benchmark::State& state) {
    const auto N = static_cast<coord_t>(state.range(0));
    const BranchingSchedule s(1, {N}, {N / 8});
    const GridSet B = random_pairs(N, static_cast<int>(N), 1);
    fav::AvoidParams p;
    p.s = 1;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        p.seed = seed++;
        benchmark::DoNotOptimize(fav::avoid_step(fav::root_set(1), B, p, s));
    }
}
BENCHMARK(BM_AvoidStep)->Arg(64)->Arg(256)->Arg(1024);

void BM_AssertAvoidsPairs(benchmark::State& state) {
    const auto D = static_cast<coord_t>(state.range(0));
    std::vector<coord_t> xs;
    for (coord_t i = 0; i < D; i += 2) xs.push_back(i);
    const GridSet X(1, 1, 1, GridKind::DQ, D, xs);
    const GridSet B = random_pairs(D, static_cast<int>(D), 2);
    for (auto _ : state) benchmark::DoNotOptimize(fav::assert_avoids(X, B, 2));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(xs.size() * (xs.size() - 1)));
}
BENCHMARK(BM_AssertAvoidsPairs)->Arg(256)->Arg(1024);

void BM_FourierCoeffs(benchmark::State& state) {
    const coord_t D = coord_t{1} << 20;
    std::mt19937_64 gen(3);
    std::vector<coord_t> xs;
    for (int i = 0; i < state.range(0); ++i) xs.push_back(static_cast<coord_t>(gen() % static_cast<std::uint64_t>(D)));
    const auto mu = fav::measure_of_set(GridSet(1, 1, 1, GridKind::DQ, D, xs));
    std::vector<std::int64_t> ms;
    for (std::int64_t m = 1; m <= 256; ++m) ms.push_back(m * 977);
    for (auto _ : state) benchmark::DoNotOptimize(fav::fourier_coeffs(ms, mu));
}
BENCHMARK(BM_FourierCoeffs)->Arg(1024)->Arg(16384);

void BM_AtomicSpectrum(benchmark::State& state) {
    const auto D = static_cast<coord_t>(state.range(0));
    std::vector<coord_t> xs;
    for (coord_t i = 0; i < D; i += 3) xs.push_back(i);
    const auto mu = fav::measure_of_set(GridSet(1, 1, 1, GridKind::DQ, D, xs));
    for (auto _ : state) benchmark::DoNotOptimize(fav::atomic_spectrum(mu));
}
BENCHMARK(BM_AtomicSpectrum)->Arg(1 << 12)->Arg(1 << 18);

void BM_CanonicalWeightsFrostman(benchmark::State& state) {
    const int depth = static_cast<int>(state.range(0));
    const BranchingSchedule s(1, std::vector<coord_t>(static_cast<std::size_t>(depth), 4),
                              std::vector<coord_t>(static_cast<std::size_t>(depth), 2));
    std::vector<GridSet> levels{fav::root_set(1)};
    for (int k = 1; k <= depth; ++k) levels.push_back(fav::random_select(levels.back(), s, static_cast<std::uint64_t>(k)));
    for (auto _ : state) benchmark::DoNotOptimize(fav::frostman_exponent(fav::canonical_weights(levels, s)));
}
BENCHMARK(BM_CanonicalWeightsFrostman)->Arg(6)->Arg(10);

void BM_ZeroSetCoverCount(benchmark::State& state) {
    fav::ZeroSetSpec z;
    z.lipschitz = std::sqrt(2.0);
    z.g = [](const double* x, double* out) { out[0] = x[0] + x[1] - 1; };
    const auto o = fav::zero_set_cover(z);
    const auto D = static_cast<coord_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(o->cover_count(1, D));
}
BENCHMARK(BM_ZeroSetCoverCount)->Arg(1 << 10)->Arg(1 << 14);

}  // namespace

BENCHMARK_MAIN();
