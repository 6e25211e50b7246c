#include "ideaforge/common.hpp"
#include "ideaforge/seqmodel.hpp"

#include <benchmark/benchmark.h>

using namespace ideaforge;

namespace {

std::vector<std::vector<int>> corpus_seqs(int n_seqs, int atom_count, uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<int>> seqs(static_cast<std::size_t>(n_seqs));
    for (auto& s : seqs) {
        const std::size_t len = 2 + rng.below(3);
        for (std::size_t k = 0; k < len; ++k) {
            s.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(atom_count))));
        }
    }
    return seqs;
}

void BM_train(benchmark::State& state) {
    const auto seqs = corpus_seqs(static_cast<int>(state.range(0)), 2457, 3);
    for (auto _ : state) {
        auto model = lm::AtomLM::train(seqs, 2457);
        benchmark::DoNotOptimize(model);
    }
}

void BM_sample(benchmark::State& state) {
    const auto seqs = corpus_seqs(2000, 2457, 3);
    const auto model = lm::AtomLM::train(seqs, 2457);
    for (auto _ : state) {
        auto draws = model.sample(static_cast<int>(state.range(0)), 3, 1.0, 99);
        benchmark::DoNotOptimize(draws);
    }
}

void BM_score(benchmark::State& state) {
    const auto seqs = corpus_seqs(2000, 2457, 3);
    const auto model = lm::AtomLM::train(seqs, 2457);
    const auto draws = model.sample(static_cast<int>(state.range(0)), 3, 1.0, 99);
    for (auto _ : state) {
        double total = 0;
        for (const auto& d : draws) total += model.score(d).score;
        benchmark::DoNotOptimize(total);
    }
}

} // namespace

BENCHMARK(BM_train)->Arg(1000)->Arg(5000);
BENCHMARK(BM_sample)->Arg(1000)->Arg(10000);
BENCHMARK(BM_score)->Arg(10000);

BENCHMARK_MAIN();
