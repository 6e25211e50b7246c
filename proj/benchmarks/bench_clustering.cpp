#include "ideaforge/clustering.hpp"
#include "ideaforge/common.hpp"

#include <benchmark/benchmark.h>

using namespace ideaforge;

namespace {

std::vector<EmbeddingVector> blobs(int n_points, int dim, int n_blobs, uint64_t seed) {
    Rng rng(seed);
    std::vector<EmbeddingVector> points;
    points.reserve(static_cast<std::size_t>(n_points));
    for (int i = 0; i < n_points; ++i) {
        const int blob = i % n_blobs;
        std::vector<double> v(static_cast<std::size_t>(dim));
        for (int d = 0; d < dim; ++d) {
            v[static_cast<std::size_t>(d)] =
                (d == blob ? 10.0 : 0.0) + 0.1 * rng.next_gaussian();
        }
        points.emplace_back(std::move(v));
    }
    return points;
}

void BM_hdbscan(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto points = blobs(n, 16, 4, 42);
    clustering::ClusterParams params;
    for (auto _ : state) {
        auto labels = clustering::hdbscan(points, params);
        benchmark::DoNotOptimize(labels);
    }
    state.SetComplexityN(n);
}

void BM_mst(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto points = blobs(n, 16, 4, 42);
    const auto core = clustering::core_distances(points, 2);
    for (auto _ : state) {
        auto mst = clustering::build_mst(points, core);
        benchmark::DoNotOptimize(mst);
    }
    state.SetComplexityN(n);
}

} // namespace

BENCHMARK(BM_hdbscan)->Arg(128)->Arg(256)->Arg(512)->Complexity();
BENCHMARK(BM_mst)->Arg(128)->Arg(256)->Arg(512)->Complexity();

BENCHMARK_MAIN();
