#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "aird/counterfeiter.hpp"
#include "fd_harness.hpp"
#include "oracles.hpp"

namespace {

// Two tight clusters with different metadata plus one far-away entity.
aird::dataset confusable_pair_dataset() {
    aird::dataset ds;
    ds.dim = 8;
    aird::rng gen(70);
    const auto base_a = oracle::random_unit(8, gen);
    const auto add = [&](std::uint64_t id, const std::vector<float>& center, double wobble,
                         const std::string& meta) {
        aird::package p;
        p.id = id;
        p.image = center;
        for (auto& x : p.image) x += static_cast<float>(wobble * gen.normal());
        aird::normalize_in_place(p.image);
        p.metadata_id = ds.vocab.intern(meta);
        ds.packages.push_back(std::move(p));
    };
    for (int i = 0; i < 6; ++i) add(i, base_a, 0.02, "entity_a");
    for (int i = 0; i < 6; ++i) add(10 + i, base_a, 0.05, "entity_b"); // confusable twin
    const auto far = oracle::random_unit(8, gen);
    for (int i = 0; i < 4; ++i) add(20 + i, far, 0.02, "entity_c");
    return ds;
}

} // namespace

TEST_CASE("encode_metadata returns the seeded row, deterministically") {
    aird::rng gen(1);
    const auto enc = aird::make_metadata_encoder(6, 4, gen);
    const auto a = aird::encode_metadata(enc, 3);
    const auto b = aird::encode_metadata(enc, 3);
    CHECK(a == b);
    REQUIRE(a.size() == 4);
    const auto row = enc.row(3);
    for (std::size_t j = 0; j < 4; ++j) CHECK(a[j] == row[j]);
    CHECK_THROWS_AS(aird::encode_metadata(enc, 6), aird::error);

    aird::rng gen2(1);
    const auto enc2 = aird::make_metadata_encoder(6, 4, gen2);
    CHECK(enc.table == enc2.table);
}

TEST_CASE("fetch_fake_candidates matches the filtered exhaustive oracle") {
    const auto ds = confusable_pair_dataset();
    const auto idx = aird::build_index(ds, {.nlist = 2, .m_sub = 4, .bits = 6, .seed = 3});
    aird::rng gen(2);
    const auto enc = aird::make_metadata_encoder(ds.vocab.size(), 4, gen);

    const auto& query = ds.packages[0]; // entity_a
    const auto got = aird::fetch_fake_candidates(idx, enc, query.image, query.metadata_id, 3,
                                                 {.nprobe = idx.nlist});
    const auto want = oracle::scan_if(ds, query.image, 3, [&](const aird::package& p) {
        return p.metadata_id != query.metadata_id;
    });

    REQUIRE(got.k() == 3);
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(got.items[r].package_id == want[r].id);
        CHECK(got.items[r].metadata_id != query.metadata_id);
        // Nearest cross-entity neighbors are the confusable twin's images.
        CHECK(got.items[r].metadata_id == ds.vocab.id_of("entity_b"));
    }
    for (std::size_t r = 1; r < 3; ++r)
        CHECK(got.items[r].similarity <= got.items[r - 1].similarity);

    // Metadata embeddings attached from the encoder.
    for (const auto& c : got.items)
        CHECK(c.metadata == aird::encode_metadata(enc, c.metadata_id));
}

TEST_CASE("cssn_score annihilates with zero weights and is per-candidate independent") {
    aird::rng gen(5);
    auto mg = aird::make_mg(4, 3, {.cssn_hidden1 = 6, .cssn_hidden2 = 4}, gen);

    const auto qi = oracle::random_unit(4, gen);
    std::vector<float> qm{0.1f, -0.2f, 0.3f};
    const auto c1i = oracle::random_unit(4, gen);
    std::vector<float> c1m{0.5f, 0.0f, -0.5f};
    const auto c2i = oracle::random_unit(4, gen);
    std::vector<float> c2m{-0.3f, 0.2f, 0.1f};

    SUBCASE("zero weights give score 0") {
        for (auto& l : mg.cssn.layers) {
            std::fill(l.w.a.begin(), l.w.a.end(), 0.0f);
            std::fill(l.b.begin(), l.b.end(), 0.0f);
        }
        CHECK(aird::cssn_score(mg, qi, qm, c1i, c1m) == 0.0);
    }

    SUBCASE("swapping two candidates swaps their scores") {
        const double s1 = aird::cssn_score(mg, qi, qm, c1i, c1m);
        const double s2 = aird::cssn_score(mg, qi, qm, c2i, c2m);
        CHECK(aird::cssn_score(mg, qi, qm, c2i, c2m) == s2);
        CHECK(aird::cssn_score(mg, qi, qm, c1i, c1m) == s1);
        CHECK(s1 != s2);
    }
}

TEST_CASE("hand-set one-unit CSSN equals the written-out composition") {
    // d_i = 1, d_m = 1: input (qi, qm, ci, cm). Hidden1: relu(w1 . x + 0.1),
    // hidden2: relu(0.5 h1 - 0.05), output: 2 h2 + 0.25.
    aird::rng gen(6);
    auto mg = aird::make_mg(1, 1, {.cssn_hidden1 = 1, .cssn_hidden2 = 1}, gen);
    auto& l1 = mg.cssn.layers[0];
    l1.w(0, 0) = 0.3f; l1.w(0, 1) = -0.7f; l1.w(0, 2) = 0.2f; l1.w(0, 3) = 0.9f;
    l1.b[0] = 0.1f;
    auto& l2 = mg.cssn.layers[1];
    l2.w(0, 0) = 0.5f;
    l2.b[0] = -0.05f;
    auto& l3 = mg.cssn.layers[2];
    l3.w(0, 0) = 2.0f;
    l3.b[0] = 0.25f;

    const std::vector<float> qi{0.8f}, qm{-0.4f}, ci{0.6f}, cm{0.5f};
    const double z1 = 0.3 * 0.8 + (-0.7) * (-0.4) + 0.2 * 0.6 + 0.9 * 0.5 + 0.1;
    const double h1 = std::max(0.0, z1);
    const double h2 = std::max(0.0, 0.5 * h1 - 0.05);
    const double want = 2.0 * h2 + 0.25;
    CHECK(aird::cssn_score(mg, qi, qm, ci, cm) == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("fabricate reproduces the chosen candidate under a sharp choice") {
    aird::rng gen(8);
    auto mg = aird::make_mg(3, 4, {.cssn_hidden1 = 1, .cssn_hidden2 = 1}, gen);
    // Rig the CSSN so candidate images' first component drives the score with
    // a gap of at least 1.
    auto& l1 = mg.cssn.layers[0];
    std::fill(l1.w.a.begin(), l1.w.a.end(), 0.0f);
    l1.w(0, 3 + 4) = 1.0f; // first component of the candidate image slice
    l1.b[0] = 2.0f;        // keep relu active
    auto& l2 = mg.cssn.layers[1];
    l2.w(0, 0) = 1.0f;
    l2.b[0] = 0.0f;
    auto& l3 = mg.cssn.layers[2];
    l3.w(0, 0) = 1.0f;
    l3.b[0] = 0.0f;

    aird::candidate_set cands;
    for (int k = 0; k < 3; ++k) {
        aird::candidate c;
        c.package_id = k;
        c.metadata_id = k;
        c.image = {k == 1 ? 1.5f : -1.5f, 0.0f, 0.0f}; // candidate 1 wins by >= 1
        c.metadata.assign(4, 0.0f);
        c.metadata[static_cast<std::size_t>(k)] = 1.0f;
        cands.items.push_back(std::move(c));
    }
    const std::vector<float> qi{0.0f, 0.0f, 0.0f};
    const std::vector<float> qm(4, 0.25f);

    const auto fab = aird::fabricate(mg, cands, qi, qm, 0.01);
    CHECK(fab.choice.argmax() == 1);
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(std::abs(fab.metadata[j] - cands.items[1].metadata[j]) <= 1e-4);
}

TEST_CASE("fabricate with identical candidate metadata returns it exactly") {
    aird::rng gen(9);
    auto mg = aird::make_mg(2, 3, {.cssn_hidden1 = 4, .cssn_hidden2 = 3}, gen);
    aird::candidate_set cands;
    const std::vector<float> shared{0.3f, -0.7f, 0.45f};
    for (int k = 0; k < 3; ++k) {
        aird::candidate c;
        c.package_id = k;
        c.metadata_id = 2;
        c.image = oracle::random_unit(2, gen);
        c.metadata = shared;
        cands.items.push_back(std::move(c));
    }
    const std::vector<float> qi{1.0f, 0.0f}, qm{0.0f, 0.0f, 0.0f};
    const auto fab = aird::fabricate(mg, cands, qi, qm, 0.3);
    for (std::size_t j = 0; j < 3; ++j) CHECK(fab.metadata[j] == shared[j]);
}

TEST_CASE("uniform choice over two one-hot metadata rows lands on the midpoint") {
    aird::rng gen(10);
    auto mg = aird::make_mg(2, 2, {.cssn_hidden1 = 3, .cssn_hidden2 = 2}, gen);
    for (auto& l : mg.cssn.layers) {
        std::fill(l.w.a.begin(), l.w.a.end(), 0.0f);
        std::fill(l.b.begin(), l.b.end(), 0.0f);
    }
    aird::candidate_set cands;
    for (int k = 0; k < 2; ++k) {
        aird::candidate c;
        c.package_id = k;
        c.metadata_id = k;
        c.image = {1.0f, 0.0f};
        c.metadata = {k == 0 ? 1.0f : 0.0f, k == 0 ? 0.0f : 1.0f};
        cands.items.push_back(std::move(c));
    }
    const auto fab = aird::fabricate(mg, cands, std::vector<float>{0.0f, 1.0f},
                                     std::vector<float>{0.0f, 0.0f}, 0.5);
    CHECK(fab.choice.weights[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(fab.metadata[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(fab.metadata[1] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("fabricated metadata stays in the candidates' coordinate hull") {
    aird::rng gen(12);
    for (int trial = 0; trial < 25; ++trial) {
        auto mg = aird::make_mg(4, 5, {.cssn_hidden1 = 6, .cssn_hidden2 = 4}, gen);
        aird::candidate_set cands;
        const std::size_t K = 1 + trial % 4;
        for (std::size_t k = 0; k < K; ++k) {
            aird::candidate c;
            c.package_id = k;
            c.metadata_id = static_cast<std::uint32_t>(k);
            c.image = oracle::random_unit(4, gen);
            c.metadata.resize(5);
            for (auto& v : c.metadata) v = static_cast<float>(gen.uniform(-2.0, 2.0));
            cands.items.push_back(std::move(c));
        }
        const auto qi = oracle::random_unit(4, gen);
        std::vector<float> qm(5);
        for (auto& v : qm) v = static_cast<float>(gen.uniform(-1.0, 1.0));
        const double tau = 0.05 + 0.95 * gen.uniform();
        const auto fab = aird::fabricate(mg, cands, qi, qm, tau);
        for (std::size_t j = 0; j < 5; ++j) {
            double lo = 1e30, hi = -1e30;
            for (const auto& c : cands.items) {
                lo = std::min(lo, static_cast<double>(c.metadata[j]));
                hi = std::max(hi, static_cast<double>(c.metadata[j]));
            }
            CHECK(fab.metadata[j] >= lo - 1e-6);
            CHECK(fab.metadata[j] <= hi + 1e-6);
        }
    }
}

TEST_CASE("adding a constant to every score leaves the choice unchanged") {
    aird::rng gen(14);
    auto mg = aird::make_mg(3, 3, {.cssn_hidden1 = 5, .cssn_hidden2 = 4}, gen);
    aird::candidate_set cands;
    for (int k = 0; k < 3; ++k) {
        aird::candidate c;
        c.package_id = k;
        c.metadata_id = k;
        c.image = oracle::random_unit(3, gen);
        c.metadata = {0.1f * k, -0.2f * k, 0.3f};
        cands.items.push_back(std::move(c));
    }
    const auto qi = oracle::random_unit(3, gen);
    const std::vector<float> qm{0.2f, 0.1f, -0.3f};

    const auto before = aird::fabricate(mg, cands, qi, qm, 0.2);
    mg.cssn.layers.back().b[0] += 7.5f; // shifts every candidate score equally
    const auto after = aird::fabricate(mg, cands, qi, qm, 0.2);

    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(after.choice.scores[k] ==
              doctest::Approx(before.choice.scores[k] + 7.5).epsilon(1e-5));
        CHECK(std::abs(after.choice.weights[k] - before.choice.weights[k]) <= 1e-6);
    }
    CHECK(after.choice.argmax() == before.choice.argmax());
}

TEST_CASE("fabricated metadata differs from the query row for separated encoder rows") {
    for (std::uint64_t seed : {31u, 32u, 33u, 34u}) {
        aird::rng gen(seed);
        auto mg = aird::make_mg(4, 6, {.cssn_hidden1 = 6, .cssn_hidden2 = 4}, gen);
        auto enc = aird::make_metadata_encoder(8, 6, gen);
        // Verify the generic row separation this test relies on.
        for (std::uint32_t a = 0; a < 8; ++a)
            for (std::uint32_t b = a + 1; b < 8; ++b) {
                double dist = 0.0;
                for (std::size_t j = 0; j < 6; ++j)
                    dist = std::max(dist, std::abs(static_cast<double>(enc.row(a)[j]) -
                                                   enc.row(b)[j]));
                REQUIRE(dist >= 1e-3);
            }
        aird::candidate_set cands;
        for (int k = 0; k < 3; ++k) {
            aird::candidate c;
            c.package_id = k;
            c.metadata_id = 1 + k; // query is row 0
            c.image = oracle::random_unit(4, gen);
            cands.items.push_back(std::move(c));
        }
        aird::refresh_candidate_metadata(cands, enc);
        const auto qi = oracle::random_unit(4, gen);
        const auto qm = aird::encode_metadata(enc, 0);
        const auto fab = aird::fabricate(mg, cands, qi, qm, 0.1);
        double dist = 0.0;
        for (std::size_t j = 0; j < 6; ++j)
            dist = std::max(dist, std::abs(static_cast<double>(fab.metadata[j]) - qm[j]));
        CHECK(dist > 1e-6);
    }
}

TEST_CASE("fabrication path passes finite differences into CSSN and encoder rows") {
    std::size_t nonzero_rows = 0;
    for (std::uint64_t seed : {41u, 42u, 43u}) {
        const auto report = fd::check_fabrication(seed);
        CHECK(report.checked > 0);
        CHECK(report.max_rel_error <= 1e-3);
        ++nonzero_rows;
    }
    CHECK(nonzero_rows == 3);
}

TEST_CASE("cssn finite differences on its own") {
    for (std::uint64_t seed : {51u, 52u, 53u}) {
        const auto report = fd::check_cssn(seed);
        CHECK(report.checked > 0);
        CHECK(report.max_rel_error <= 1e-3);
    }
}
