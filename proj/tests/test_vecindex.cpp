#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "aird/vecindex.hpp"
#include "oracles.hpp"

namespace {

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double recall_against_oracle(const aird::index_model& idx, const aird::dataset& ds,
                             const std::vector<std::vector<float>>& queries, std::size_t k,
                             const aird::search_params& params) {
    double hits = 0.0;
    for (const auto& q : queries) {
        const auto got = aird::search(idx, q, k, params);
        const auto want = oracle::scan(ds, q, k);
        for (const auto& w : want)
            for (const auto& g : got)
                if (g.package_id == w.id) {
                    hits += 1.0;
                    break;
                }
    }
    return hits / static_cast<double>(queries.size() * k);
}

} // namespace

TEST_CASE("kmeans with k == n reproduces the points") {
    aird::rng gen(1);
    const std::size_t n = 12, dim = 6;
    std::vector<float> pts(n * dim);
    for (auto& x : pts) x = static_cast<float>(gen.uniform(-1.0, 1.0));
    const auto centroids = aird::kmeans(pts, n, dim, n, 10, 3);

    // Zero total quantization error: every point sits on some centroid.
    for (std::size_t i = 0; i < n; ++i) {
        double best = 1e300;
        for (std::size_t c = 0; c < n; ++c) {
            double d = 0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double diff = pts[i * dim + j] - centroids[c * dim + j];
                d += diff * diff;
            }
            best = std::min(best, d);
        }
        CHECK(best <= 1e-12);
    }
}

TEST_CASE("kmeans with k == 1 returns the arithmetic mean") {
    aird::rng gen(2);
    const std::size_t n = 40, dim = 5;
    std::vector<float> pts(n * dim);
    for (auto& x : pts) x = static_cast<float>(gen.uniform(-1.0, 1.0));
    const auto c = aird::kmeans(pts, n, dim, 1, 5, 9);
    for (std::size_t j = 0; j < dim; ++j) {
        double mean = 0;
        for (std::size_t i = 0; i < n; ++i) mean += pts[i * dim + j];
        mean /= static_cast<double>(n);
        CHECK(c[j] == doctest::Approx(mean).epsilon(1e-5));
    }
}

TEST_CASE("kmeans separates two well-spaced gaussian blobs") {
    const double sigma = 0.05;
    aird::rng gen(3);
    const std::size_t per = 150, dim = 4;
    std::vector<float> pts(2 * per * dim);
    std::vector<double> mean_a(dim, 0.0), mean_b(dim, 0.0);
    for (std::size_t i = 0; i < per; ++i)
        for (std::size_t j = 0; j < dim; ++j) {
            // Blob A at origin, blob B offset by 10 sigma along every axis.
            const double a = sigma * gen.normal();
            const double b = 10.0 * sigma + sigma * gen.normal();
            pts[i * dim + j] = static_cast<float>(a);
            pts[(per + i) * dim + j] = static_cast<float>(b);
            mean_a[j] += a / per;
            mean_b[j] += b / per;
        }
    const auto c = aird::kmeans(pts, 2 * per, dim, 2, 20, 4);

    // Oracle: direct means of the generated memberships, matched to the
    // nearer centroid.
    const auto dist = [&](std::size_t ci, const std::vector<double>& m) {
        double d = 0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double diff = c[ci * dim + j] - m[j];
            d += diff * diff;
        }
        return std::sqrt(d);
    };
    const std::size_t a_centroid = dist(0, mean_a) < dist(1, mean_a) ? 0 : 1;
    CHECK(dist(a_centroid, mean_a) <= 0.1 * sigma);
    CHECK(dist(1 - a_centroid, mean_b) <= 0.1 * sigma);
}

TEST_CASE("kmeans rejects k > n and k == 0") {
    std::vector<float> pts{1.0f, 2.0f};
    CHECK_THROWS_AS(aird::kmeans(pts, 2, 1, 3, 5, 1), aird::error);
    CHECK_THROWS_AS(aird::kmeans(pts, 2, 1, 0, 5, 1), aird::error);
}

TEST_CASE("singleton index files one entry and finds it") {
    const auto ds = oracle::random_dataset(1, 8, 1, 5);
    const auto idx = aird::build_index(ds, {.nlist = 4, .m_sub = 4, .bits = 8, .seed = 1});
    std::size_t nonempty = 0;
    for (const auto& l : idx.list_ids) nonempty += !l.empty();
    CHECK(nonempty == 1);
    const auto hits = aird::search(idx, ds.packages[0].image, 1, {.nprobe = idx.nlist});
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].package_id == ds.packages[0].id);
    CHECK(hits[0].similarity == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("build rejects an indivisible dimension and an empty dataset") {
    const auto ds = oracle::random_dataset(10, 10, 2, 6);
    CHECK_THROWS_AS(aird::build_index(ds, {.nlist = 2, .m_sub = 3, .bits = 8, .seed = 1}),
                    aird::config_error);
    aird::dataset empty;
    CHECK_THROWS_AS(aird::build_index(empty, {}), aird::error);
}

TEST_CASE("rebuild with the same seed is byte-identical on disk") {
    const auto ds = oracle::random_dataset(300, 16, 11, 8);
    const aird::index_build_params params{.nlist = 8, .m_sub = 4, .bits = 6, .seed = 42};
    const auto a = temp_file("aird_idx_a.bin");
    const auto b = temp_file("aird_idx_b.bin");
    aird::save_index(aird::build_index(ds, params), a);
    aird::save_index(aird::build_index(ds, params), b);
    CHECK(slurp(a) == slurp(b));
    CHECK(!slurp(a).empty());
    std::filesystem::remove(a);
    std::filesystem::remove(b);
}

TEST_CASE("self-retrieval under full probe returns rank-1 similarity 1") {
    const auto ds = oracle::random_dataset(120, 12, 6, 17);
    const auto idx = aird::build_index(ds, {.nlist = 8, .m_sub = 4, .bits = 8, .seed = 2});
    for (std::size_t i = 0; i < ds.packages.size(); i += 13) {
        const auto hits =
            aird::search(idx, ds.packages[i].image, 3,
                         {.nprobe = idx.nlist, .shortlist = static_cast<std::uint32_t>(idx.size())});
        REQUIRE(!hits.empty());
        CHECK(hits[0].package_id == ds.packages[i].id);
        CHECK(hits[0].similarity == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("exactness degeneration: full probe and full shortlist equal the oracle") {
    // Property over several sizes/dimensions and seeds.
    for (const auto& [n, dim, seed] : {std::tuple{50, 8, 1}, {400, 24, 2}, {1000, 64, 3}}) {
        const auto ds = oracle::random_dataset(n, dim, 9, seed);
        const auto idx = aird::build_index(ds, {.m_sub = 4, .bits = 8, .seed = 7});
        aird::rng qgen(seed + 100);
        for (int q = 0; q < 25; ++q) {
            const auto query = oracle::random_unit(dim, qgen);
            const auto got = aird::search(idx, query, 3,
                                          {.nprobe = idx.nlist,
                                           .shortlist = static_cast<std::uint32_t>(idx.size())});
            const auto want = oracle::scan(ds, query, 3);
            REQUIRE(got.size() == want.size());
            for (std::size_t r = 0; r < got.size(); ++r) {
                CHECK(got[r].package_id == want[r].id);
                CHECK(got[r].similarity == want[r].similarity);
            }
        }
    }
}

TEST_CASE("query orthogonal to every indexed vector ties at zero, ordered by id") {
    aird::dataset ds;
    ds.dim = 6;
    // Vectors living in the first four axes; query on the last axis.
    aird::rng gen(4);
    for (int i = 0; i < 10; ++i) {
        aird::package p;
        p.id = 100 - i; // descending insertion ids to exercise the tie rule
        std::vector<float> v(6, 0.0f);
        for (int j = 0; j < 4; ++j) v[j] = static_cast<float>(gen.uniform(-1.0, 1.0));
        p.image = aird::normalize(v);
        p.metadata_id = ds.vocab.intern("m" + std::to_string(i % 2));
        ds.packages.push_back(std::move(p));
    }
    const auto idx = aird::build_index(ds, {.nlist = 2, .m_sub = 2, .bits = 4, .seed = 3});
    std::vector<float> query(6, 0.0f);
    query[5] = 1.0f;
    const auto hits = aird::search(idx, query, 5,
                                   {.nprobe = idx.nlist,
                                    .shortlist = static_cast<std::uint32_t>(idx.size())});
    REQUIRE(hits.size() == 5);
    for (const auto& h : hits) CHECK(std::abs(h.similarity) <= 1e-6);
    for (std::size_t r = 1; r < hits.size(); ++r)
        CHECK(hits[r].package_id > hits[r - 1].package_id);
}

TEST_CASE("k = 0 yields an empty result; empty index errors") {
    const auto ds = oracle::random_dataset(20, 8, 2, 5);
    const auto idx = aird::build_index(ds, {.nlist = 2, .m_sub = 4, .bits = 4, .seed = 1});
    CHECK(aird::search(idx, ds.packages[0].image, 0).empty());
    aird::index_model empty;
    CHECK_THROWS_WITH_AS(aird::search(empty, ds.packages[0].image, 1),
                         doctest::Contains("empty index"), aird::error);
}

TEST_CASE("recall is non-decreasing in nprobe and shortlist") {
    const auto ds = oracle::random_dataset(1200, 32, 10, 21);
    const auto idx = aird::build_index(ds, {.nlist = 32, .m_sub = 8, .bits = 8, .seed = 5});
    aird::rng qgen(99);
    std::vector<std::vector<float>> queries;
    for (int i = 0; i < 60; ++i) queries.push_back(oracle::random_unit(32, qgen));

    const auto n = static_cast<std::uint32_t>(idx.size());
    double prev = -1.0;
    for (std::uint32_t nprobe : {1u, 2u, 4u, 8u, 16u, 32u}) {
        const double r = recall_against_oracle(idx, ds, queries, 3,
                                               {.nprobe = nprobe, .shortlist = n});
        CHECK(r >= prev);
        prev = r;
    }
    CHECK(prev == 1.0); // full probe + full shortlist is exact

    prev = -1.0;
    for (std::uint32_t shortlist : {3u, 10u, 30u, 100u, 300u, n}) {
        const double r = recall_against_oracle(idx, ds, queries, 3,
                                               {.nprobe = idx.nlist, .shortlist = shortlist});
        CHECK(r >= prev);
        prev = r;
    }
    CHECK(prev == 1.0);
}

TEST_CASE("search_excluding_metadata drops the excluded stratum") {
    const auto ds = oracle::random_dataset(150, 16, 5, 31);
    const auto idx = aird::build_index(ds, {.nlist = 8, .m_sub = 4, .bits = 8, .seed = 11});
    aird::rng qgen(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto query = oracle::random_unit(16, qgen);
        const std::uint32_t excluded = trial % 5;
        const auto got = aird::search_excluding_metadata(idx, query, 4, excluded,
                                                         {.nprobe = idx.nlist});
        const auto want = oracle::scan_if(ds, query, 4, [&](const aird::package& p) {
            return p.metadata_id != excluded;
        });
        REQUIRE(got.size() == want.size());
        for (std::size_t r = 0; r < got.size(); ++r) {
            CHECK(got[r].package_id == want[r].id);
            CHECK(idx.metadata_of(got[r].package_id) != excluded);
        }
    }
}

TEST_CASE("nearest neighbor sharing the query metadata is filtered out") {
    aird::dataset ds;
    ds.dim = 4;
    const auto add = [&](std::uint64_t id, std::vector<float> v, const std::string& m) {
        aird::package p;
        p.id = id;
        p.image = aird::normalize(v);
        p.metadata_id = ds.vocab.intern(m);
        ds.packages.push_back(std::move(p));
    };
    add(0, {1, 0, 0, 0}, "a");        // the query's own entity, nearest
    add(1, {0.9f, 0.1f, 0, 0}, "a");  // same entity, very close
    add(2, {0.8f, 0.3f, 0, 0}, "b");  // differing metadata
    add(3, {0, 0, 1, 0}, "c");
    const auto idx = aird::build_index(ds, {.nlist = 2, .m_sub = 2, .bits = 4, .seed = 1});

    const auto hits = aird::search_excluding_metadata(idx, ds.packages[0].image, 1, 0,
                                                      {.nprobe = idx.nlist});
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].package_id == 2);
}

TEST_CASE("search_excluding_metadata errors when every package shares the excluded id") {
    const auto ds = oracle::random_dataset(10, 8, 1, 3);
    const auto idx = aird::build_index(ds, {.nlist = 2, .m_sub = 4, .bits = 4, .seed = 1});
    CHECK_THROWS_WITH_AS(
        aird::search_excluding_metadata(idx, ds.packages[0].image, 1, 0, {.nprobe = idx.nlist}),
        doctest::Contains("no counterfeit source"), aird::error);
}

TEST_CASE("shortlist doubling retry still finds k survivors under a heavy filter") {
    // 63 of 64 packages share metadata id 0; only one differs. A small
    // shortlist must escalate to the exhaustive scan to find it.
    aird::rng gen(13);
    aird::dataset ds;
    ds.dim = 8;
    for (int i = 0; i < 64; ++i) {
        aird::package p;
        p.id = i;
        p.image = oracle::random_unit(8, gen);
        p.metadata_id = ds.vocab.intern(i == 63 ? "rare" : "common");
        ds.packages.push_back(std::move(p));
    }
    const auto idx = aird::build_index(ds, {.nlist = 8, .m_sub = 4, .bits = 4, .seed = 2});
    const auto hits = aird::search_excluding_metadata(idx, ds.packages[0].image, 1, 0,
                                                      {.nprobe = 1, .shortlist = 2});
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].package_id == 63);
}

TEST_CASE("lookup_by_metadata pads by cycling and ranks by image similarity") {
    const auto ds = oracle::random_dataset(60, 12, 6, 41);
    const auto idx = aird::build_index(ds, {.nlist = 4, .m_sub = 4, .bits = 6, .seed = 3});

    SUBCASE("single-package stratum repeats to k") {
        aird::dataset tiny;
        tiny.dim = 4;
        aird::package p;
        p.id = 7;
        p.image = {1, 0, 0, 0};
        p.metadata_id = tiny.vocab.intern("only");
        tiny.packages.push_back(p);
        aird::package q;
        q.id = 8;
        q.image = {0, 1, 0, 0};
        q.metadata_id = tiny.vocab.intern("other");
        tiny.packages.push_back(q);
        const auto tiny_idx = aird::build_index(tiny, {.nlist = 1, .m_sub = 2, .bits = 2, .seed = 1});
        const auto hits = aird::lookup_by_metadata(tiny_idx, 0, 3, tiny.packages[0].image);
        REQUIRE(hits.size() == 3);
        for (const auto& h : hits) CHECK(h.package_id == 7);
    }

    SUBCASE("matches the filtered exhaustive ranking") {
        aird::rng qgen(5);
        for (std::uint32_t meta = 0; meta < 6; ++meta) {
            const auto query = oracle::random_unit(12, qgen);
            const auto got = aird::lookup_by_metadata(idx, meta, 3, query);
            const auto want = oracle::scan_if(ds, query, 3, [&](const aird::package& p) {
                return p.metadata_id == meta;
            });
            REQUIRE(got.size() == 3);
            for (std::size_t r = 0; r < std::min<std::size_t>(3, want.size()); ++r)
                CHECK(got[r].package_id == want[r].id);
        }
    }

    SUBCASE("a stratum member queried by its own image ranks first") {
        const auto& pkg = ds.packages[10];
        const auto hits = aird::lookup_by_metadata(idx, pkg.metadata_id, 3, pkg.image);
        CHECK(hits[0].package_id == pkg.id);
    }

    SUBCASE("unknown metadata id errors") {
        CHECK_THROWS_WITH_AS(aird::lookup_by_metadata(idx, 999, 3, ds.packages[0].image),
                             doctest::Contains("unknown metadata"), aird::error);
    }
}

TEST_CASE("save -> load -> search equals pre-save search") {
    const auto ds = oracle::random_dataset(250, 16, 9, 53);
    const auto idx = aird::build_index(ds, {.nlist = 8, .m_sub = 4, .bits = 8, .seed = 5});
    const auto path = temp_file("aird_idx_roundtrip.bin");
    aird::save_index(idx, path);
    const auto back = aird::load_index(path);
    std::filesystem::remove(path);

    CHECK(back.dim == idx.dim);
    CHECK(back.ids == idx.ids);
    CHECK(back.vectors == idx.vectors);
    CHECK(back.meta_map == idx.meta_map);

    aird::rng qgen(77);
    for (int q = 0; q < 100; ++q) {
        const auto query = oracle::random_unit(16, qgen);
        const auto a = aird::search(idx, query, 5, {.nprobe = 4});
        const auto b = aird::search(back, query, 5, {.nprobe = 4});
        REQUIRE(a.size() == b.size());
        for (std::size_t r = 0; r < a.size(); ++r) {
            CHECK(a[r].package_id == b[r].package_id);
            CHECK(a[r].similarity == b[r].similarity);
        }
    }
}

TEST_CASE("truncated and corrupted index files are rejected") {
    const auto ds = oracle::random_dataset(40, 8, 3, 59);
    const auto idx = aird::build_index(ds, {.nlist = 4, .m_sub = 4, .bits = 4, .seed = 5});
    const auto path = temp_file("aird_idx_corrupt.bin");
    aird::save_index(idx, path);

    auto bytes = slurp(path);
    SUBCASE("truncation") {
        std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
        CHECK_THROWS_AS(aird::load_index(path), aird::io_error);
    }
    SUBCASE("bad magic") {
        bytes[0] = 'X';
        std::ofstream(path, std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(aird::load_index(path), doctest::Contains("bad magic"), aird::io_error);
    }
    std::filesystem::remove(path);
}
