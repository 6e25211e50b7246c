#include "ideaforge/common.hpp"
#include "ideaforge/sampler.hpp"

#include <benchmark/benchmark.h>

using namespace ideaforge;

namespace {

std::vector<sampler::Candidate> scored_candidates(int n, uint64_t seed) {
    Rng rng(seed);
    std::vector<sampler::Candidate> out(static_cast<std::size_t>(n));
    for (auto& cand : out) {
        for (int k = 0; k < 3; ++k)
            cand.atom_ids.push_back(static_cast<int>(rng.below(2457)));
        cand.c_score = -rng.next_double() * 8.0;
        cand.a_score = -rng.next_double() * 8.0;
    }
    return out;
}

void BM_fuse_scored(benchmark::State& state) {
    const auto candidates = scored_candidates(static_cast<int>(state.range(0)), 11);
    for (auto _ : state) {
        auto fused = sampler::fuse_scored(candidates, 60.0);
        benchmark::DoNotOptimize(fused);
    }
}

void BM_dedup(benchmark::State& state) {
    const auto candidates = scored_candidates(static_cast<int>(state.range(0)), 11);
    for (auto _ : state) {
        auto unique = sampler::dedup_candidates(candidates);
        benchmark::DoNotOptimize(unique);
    }
}

} // namespace

BENCHMARK(BM_fuse_scored)->Arg(10000);
BENCHMARK(BM_dedup)->Arg(10000);

BENCHMARK_MAIN();
