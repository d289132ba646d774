#include <benchmark/benchmark.h>

#include "aird/counterfeiter.hpp"
#include "aird/detector.hpp"

namespace {

struct cv_bench_fixture {
    aird::cv_model cv;
    aird::metadata_encoder enc;
    aird::evidence_set ev;
    std::vector<float> image;
    std::vector<double> m_hat;

    cv_bench_fixture() {
        aird::rng gen(5);
        cv = aird::make_cv(64, 32, 3, {}, gen);
        enc = aird::make_metadata_encoder(200, 32, gen);
        const auto unit = [&gen](std::uint32_t dim) {
            std::vector<float> v(dim);
            for (auto& x : v) x = static_cast<float>(gen.normal());
            aird::normalize_in_place(v);
            return v;
        };
        image = unit(64);
        for (int k = 0; k < 3; ++k) {
            aird::evidence_item e;
            e.package_id = k;
            e.metadata_id = static_cast<std::uint32_t>(k);
            e.image = unit(64);
            ev.by_image.push_back(e);
            e.metadata_id = 7;
            e.image = unit(64);
            ev.by_metadata.push_back(e);
        }
        m_hat = aird::to_m_hat(enc.row(7));
    }
};

cv_bench_fixture& fixture() {
    static cv_bench_fixture f;
    return f;
}

} // namespace

static void BM_VerifierForward(benchmark::State& state) {
    auto& f = fixture();
    for (auto _ : state) {
        aird::cv_tape tape;
        benchmark::DoNotOptimize(aird::cv_forward(f.cv, f.enc, f.ev, f.image, f.m_hat, tape));
    }
}
BENCHMARK(BM_VerifierForward)->Unit(benchmark::kMicrosecond);

static void BM_VerifierForwardBackward(benchmark::State& state) {
    auto& f = fixture();
    auto grads = aird::make_cv_grads(f.cv);
    for (auto _ : state) {
        aird::cv_tape tape;
        const double y = aird::cv_forward(f.cv, f.enc, f.ev, f.image, f.m_hat, tape);
        const auto bce = aird::bce_terms(y, 1);
        aird::cv_backward(f.cv, tape, bce.dloss_dp, &grads, nullptr);
        benchmark::DoNotOptimize(grads);
    }
}
BENCHMARK(BM_VerifierForwardBackward)->Unit(benchmark::kMicrosecond);

static void BM_Fabricate(benchmark::State& state) {
    aird::rng gen(6);
    auto mg = aird::make_mg(64, 32, {}, gen);
    auto enc = aird::make_metadata_encoder(200, 32, gen);
    aird::candidate_set cands;
    for (int k = 0; k < 3; ++k) {
        aird::candidate c;
        c.package_id = k;
        c.metadata_id = static_cast<std::uint32_t>(k);
        std::vector<float> v(64);
        for (auto& x : v) x = static_cast<float>(gen.normal());
        aird::normalize_in_place(v);
        c.image = std::move(v);
        cands.items.push_back(std::move(c));
    }
    aird::refresh_candidate_metadata(cands, enc);
    std::vector<float> qi(64);
    for (auto& x : qi) x = static_cast<float>(gen.normal());
    aird::normalize_in_place(qi);
    const auto qm = aird::encode_metadata(enc, 9);

    for (auto _ : state) {
        benchmark::DoNotOptimize(aird::fabricate(mg, cands, qi, qm, 0.1));
    }
}
BENCHMARK(BM_Fabricate)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
