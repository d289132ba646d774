#include <benchmark/benchmark.h>

#include "aird/rng.hpp"
#include "aird/synthbench.hpp"
#include "aird/vecindex.hpp"

namespace {

aird::dataset& bench_dataset() {
    static aird::dataset ds = [] {
        aird::bench_config cfg;
        cfg.families = 80;
        cfg.seed = 7;
        return aird::generate(cfg);
    }();
    return ds;
}

aird::index_model& bench_index() {
    static aird::index_model idx =
        aird::build_index(bench_dataset(), {.nlist = 64, .m_sub = 8, .bits = 8, .seed = 3});
    return idx;
}

std::vector<float> random_query(aird::rng& gen, std::uint32_t dim) {
    std::vector<float> q(dim);
    for (auto& x : q) x = static_cast<float>(gen.normal());
    aird::normalize_in_place(q);
    return q;
}

} // namespace

static void BM_KMeans(benchmark::State& state) {
    const auto& ds = bench_dataset();
    std::vector<float> flat;
    flat.reserve(ds.packages.size() * ds.dim);
    for (const auto& p : ds.packages) flat.insert(flat.end(), p.image.begin(), p.image.end());
    for (auto _ : state) {
        auto centroids = aird::kmeans(flat, ds.packages.size(), ds.dim,
                                      static_cast<std::uint32_t>(state.range(0)), 10, 1);
        benchmark::DoNotOptimize(centroids);
    }
}
BENCHMARK(BM_KMeans)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_IndexSearch(benchmark::State& state) {
    const auto& idx = bench_index();
    aird::rng gen(11);
    const auto nprobe = static_cast<std::uint32_t>(state.range(0));
    for (auto _ : state) {
        state.PauseTiming();
        const auto q = random_query(gen, idx.dim);
        state.ResumeTiming();
        auto hits = aird::search(idx, q, 3, {.nprobe = nprobe});
        benchmark::DoNotOptimize(hits);
    }
}
BENCHMARK(BM_IndexSearch)->Arg(1)->Arg(4)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

static void BM_ExhaustiveScan(benchmark::State& state) {
    const auto& idx = bench_index();
    aird::rng gen(12);
    for (auto _ : state) {
        state.PauseTiming();
        const auto q = random_query(gen, idx.dim);
        state.ResumeTiming();
        auto hits = aird::search(idx, q, 3,
                                 {.nprobe = idx.nlist,
                                  .shortlist = static_cast<std::uint32_t>(idx.size())});
        benchmark::DoNotOptimize(hits);
    }
}
BENCHMARK(BM_ExhaustiveScan)->Unit(benchmark::kMicrosecond);

static void BM_MetadataLookup(benchmark::State& state) {
    const auto& idx = bench_index();
    aird::rng gen(13);
    for (auto _ : state) {
        state.PauseTiming();
        const auto q = random_query(gen, idx.dim);
        const auto meta = static_cast<std::uint32_t>(gen.uniform_index(idx.meta_map.size()));
        state.ResumeTiming();
        auto hits = aird::lookup_by_metadata(idx, meta, 3, q);
        benchmark::DoNotOptimize(hits);
    }
}
BENCHMARK(BM_MetadataLookup)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
