#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "aird/checkpoint.hpp"
#include "oracles.hpp"

namespace {

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool nets_equal(const aird::dense_net& a, const aird::dense_net& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (a.layers[l].w.a != b.layers[l].w.a) return false;
        if (a.layers[l].b != b.layers[l].b) return false;
        if (a.layers[l].act != b.layers[l].act) return false;
    }
    return true;
}

} // namespace

TEST_CASE("mg checkpoint round-trips bit-exactly") {
    aird::rng gen(1);
    auto mg = aird::make_mg(12, 5, {.cssn_hidden1 = 9, .cssn_hidden2 = 6}, gen);
    const auto enc = aird::make_metadata_encoder(7, 5, gen);

    const auto path = temp_file("aird_mg.ckpt");
    aird::save_mg_checkpoint(path, mg, enc);
    const auto back = aird::load_mg_checkpoint(path);

    CHECK(back.mg.d_i == 12);
    CHECK(back.mg.d_m == 5);
    CHECK(nets_equal(back.mg.cssn, mg.cssn));
    CHECK(back.encoder.table == enc.table);
    CHECK(back.encoder.vocab_size == 7);
    CHECK(!back.optimizer.has_value());

    // Saving the loaded model reproduces the file byte for byte.
    const auto path2 = temp_file("aird_mg2.ckpt");
    aird::save_mg_checkpoint(path2, back.mg, back.encoder);
    CHECK(slurp(path) == slurp(path2));
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("cv checkpoint round-trips with dimensions recovered") {
    aird::rng gen(2);
    auto cv = aird::make_cv(10, 4, 3, {.agg_hidden = 8, .agg_out = 5, .fuse_width = 6}, gen);
    const auto enc = aird::make_metadata_encoder(9, 4, gen);

    const auto path = temp_file("aird_cv.ckpt");
    aird::save_cv_checkpoint(path, cv, enc);
    const auto back = aird::load_cv_checkpoint(path);
    std::filesystem::remove(path);

    CHECK(back.cv.d_i == 10);
    CHECK(back.cv.d_m == 4);
    CHECK(back.cv.k == 3);
    CHECK(nets_equal(back.cv.agg_img, cv.agg_img));
    CHECK(nets_equal(back.cv.agg_meta, cv.agg_meta));
    CHECK(nets_equal(back.cv.fuse_img, cv.fuse_img));
    CHECK(nets_equal(back.cv.fuse_meta, cv.fuse_meta));
    CHECK(nets_equal(back.cv.fuse_cross, cv.fuse_cross));
    CHECK(nets_equal(back.cv.judge, cv.judge));
    CHECK(back.encoder.table == enc.table);

    // The loaded verifier scores identically.
    aird::evidence_set ev;
    aird::rng qgen(5);
    for (int k = 0; k < 3; ++k) {
        aird::evidence_item a;
        a.package_id = k;
        a.metadata_id = static_cast<std::uint32_t>(k % 9);
        a.image = oracle::random_unit(10, qgen);
        ev.by_image.push_back(a);
        a.image = oracle::random_unit(10, qgen);
        ev.by_metadata.push_back(a);
    }
    const auto image = oracle::random_unit(10, qgen);
    CHECK(aird::verify(cv, enc, ev, image, aird::to_m_hat(enc.row(2))) ==
          aird::verify(back.cv, back.encoder, ev, image, aird::to_m_hat(back.encoder.row(2))));
}

TEST_CASE("optimizer state persists when present") {
    aird::rng gen(3);
    auto mg = aird::make_mg(6, 3, {.cssn_hidden1 = 4, .cssn_hidden2 = 3}, gen);
    const auto enc = aird::make_metadata_encoder(4, 3, gen);

    aird::optimizer_snapshot opt;
    opt.step = 17;
    for (const auto& span : aird::collect_parameters(mg)) {
        opt.m.emplace_back(span.size(), 0.25f);
        opt.v.emplace_back(span.size(), 0.5f);
    }
    opt.row_step = {1, 2, 3, 4};
    opt.row_m.assign(enc.table.size(), 0.125f);
    opt.row_v.assign(enc.table.size(), 0.0625f);

    const auto path = temp_file("aird_mg_opt.ckpt");
    aird::save_mg_checkpoint(path, mg, enc, &opt);
    const auto back = aird::load_mg_checkpoint(path);
    std::filesystem::remove(path);

    REQUIRE(back.optimizer.has_value());
    CHECK(back.optimizer->step == 17);
    CHECK(back.optimizer->m == opt.m);
    CHECK(back.optimizer->v == opt.v);
    CHECK(back.optimizer->row_step == opt.row_step);
    CHECK(back.optimizer->row_m == opt.row_m);
    CHECK(back.optimizer->row_v == opt.row_v);
}

TEST_CASE("section tags and corruption are rejected") {
    aird::rng gen(4);
    auto mg = aird::make_mg(6, 3, {.cssn_hidden1 = 4, .cssn_hidden2 = 3}, gen);
    auto cv = aird::make_cv(6, 3, 2, {.agg_hidden = 4, .agg_out = 3, .fuse_width = 3}, gen);
    const auto enc = aird::make_metadata_encoder(4, 3, gen);

    const auto mg_path = temp_file("aird_tag_mg.ckpt");
    const auto cv_path = temp_file("aird_tag_cv.ckpt");
    aird::save_mg_checkpoint(mg_path, mg, enc);
    aird::save_cv_checkpoint(cv_path, cv, enc);

    SUBCASE("loading with the wrong section tag fails") {
        CHECK_THROWS_WITH_AS(aird::load_cv_checkpoint(mg_path), doctest::Contains("CV"),
                             aird::io_error);
        CHECK_THROWS_WITH_AS(aird::load_mg_checkpoint(cv_path), doctest::Contains("MG"),
                             aird::io_error);
    }
    SUBCASE("truncation fails") {
        auto bytes = slurp(cv_path);
        std::ofstream(cv_path, std::ios::binary) << bytes.substr(0, bytes.size() - 20);
        CHECK_THROWS_AS(aird::load_cv_checkpoint(cv_path), aird::io_error);
    }
    SUBCASE("bad magic fails") {
        auto bytes = slurp(mg_path);
        bytes[3] = '?';
        std::ofstream(mg_path, std::ios::binary) << bytes;
        CHECK_THROWS_WITH_AS(aird::load_mg_checkpoint(mg_path), doctest::Contains("bad magic"),
                             aird::io_error);
    }
    std::filesystem::remove(mg_path);
    std::filesystem::remove(cv_path);
}
