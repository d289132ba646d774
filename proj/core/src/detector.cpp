#include "aird/detector.hpp"

#include <algorithm>

namespace aird {

cv_model make_cv(std::uint32_t d_i, std::uint32_t d_m, std::uint32_t K, const cv_dims& dims,
                 rng& gen) {
    if (K == 0) throw config_error("cv model needs K >= 1");
    cv_model cv;
    cv.d_i = d_i;
    cv.d_m = d_m;
    cv.k = K;
    const std::size_t img_in = static_cast<std::size_t>(K + 1) * d_i;
    const std::size_t meta_in = static_cast<std::size_t>(K + 1) * d_m;
    cv.agg_img = make_dense_net(img_in, {dims.agg_hidden, dims.agg_out},
                                {activation::relu, activation::linear}, gen);
    cv.agg_meta = make_dense_net(meta_in, {dims.agg_hidden, dims.agg_out},
                                 {activation::relu, activation::linear}, gen);
    cv.fuse_img = make_dense_net(2 * static_cast<std::size_t>(dims.agg_out), {dims.fuse_width},
                                 {activation::relu}, gen);
    cv.fuse_meta = make_dense_net(2 * static_cast<std::size_t>(dims.agg_out), {dims.fuse_width},
                                  {activation::relu}, gen);
    cv.fuse_cross = make_dense_net(2 * static_cast<std::size_t>(dims.fuse_width), {dims.fuse_width},
                                   {activation::relu}, gen);
    cv.judge = make_dense_net(dims.fuse_width, {1}, {activation::sigmoid}, gen);
    return cv;
}

namespace {

std::vector<evidence_item> hits_to_evidence(const index_model& idx, const std::vector<hit>& hits,
                                            std::size_t K) {
    if (hits.empty()) throw error("gather_evidence: no retrievable evidence");
    std::vector<evidence_item> out;
    out.reserve(K);
    for (std::size_t i = 0; i < K; ++i) {
        const hit& h = hits[i % hits.size()];
        evidence_item e;
        e.package_id = h.package_id;
        e.metadata_id = idx.metadata_of(h.package_id);
        const auto v = idx.vector_of(h.package_id);
        e.image.assign(v.begin(), v.end());
        e.similarity = h.similarity;
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace

evidence_set gather_evidence(const index_model& idx, std::span<const float> image,
                             std::uint32_t claimed_metadata_id, std::size_t K,
                             std::optional<std::uint64_t> exclude_package_id,
                             const search_params& params) {
    if (K == 0) throw error("gather_evidence: K must be >= 1");
    evidence_set ev;
    const auto img_hits = exclude_package_id
                              ? search_excluding_package(idx, image, K, *exclude_package_id, params)
                              : search(idx, image, K, params);
    ev.by_image = hits_to_evidence(idx, img_hits, K);
    ev.by_metadata = hits_to_evidence(
        idx, lookup_by_metadata(idx, claimed_metadata_id, K, image, exclude_package_id), K);
    return ev;
}

std::vector<double> to_m_hat(std::span<const float> row) { return {row.begin(), row.end()}; }

namespace {

std::vector<double> concat_images(std::span<const float> head,
                                  const std::vector<evidence_item>& items) {
    std::vector<double> x;
    x.reserve(head.size() * (items.size() + 1));
    x.insert(x.end(), head.begin(), head.end());
    for (const auto& e : items) x.insert(x.end(), e.image.begin(), e.image.end());
    return x;
}

std::vector<double> concat_metadata(std::span<const double> head,
                                    const std::vector<evidence_item>& items,
                                    const metadata_encoder& enc) {
    std::vector<double> x;
    x.reserve(head.size() * (items.size() + 1));
    x.insert(x.end(), head.begin(), head.end());
    for (const auto& e : items) {
        const auto r = enc.row(e.metadata_id);
        x.insert(x.end(), r.begin(), r.end());
    }
    return x;
}

std::vector<double> concat2(std::span<const double> a, std::span<const double> b) {
    std::vector<double> x;
    x.reserve(a.size() + b.size());
    x.insert(x.end(), a.begin(), a.end());
    x.insert(x.end(), b.begin(), b.end());
    return x;
}

} // namespace

double cv_forward(const cv_model& cv, const metadata_encoder& enc, const evidence_set& evidence,
                  std::span<const float> image, std::span<const double> m_hat, cv_tape& tape) {
    if (evidence.by_image.size() != cv.k || evidence.by_metadata.size() != cv.k)
        throw error("cv_forward: evidence width does not match K");
    if (image.size() != cv.d_i || m_hat.size() != cv.d_m)
        throw error("cv_forward: query dimension mismatch");

    const auto h_ii = forward(cv.agg_img, concat_images(image, evidence.by_image), tape.agg_ii);
    const auto h_im = forward(cv.agg_img, concat_images(image, evidence.by_metadata), tape.agg_im);
    const auto h_mi = forward(cv.agg_meta, concat_metadata(m_hat, evidence.by_image, enc), tape.agg_mi);
    const auto h_mm = forward(cv.agg_meta, concat_metadata(m_hat, evidence.by_metadata, enc), tape.agg_mm);

    const auto h_img = forward(cv.fuse_img, concat2(h_ii, h_im), tape.fuse_img);
    const auto h_meta = forward(cv.fuse_meta, concat2(h_mi, h_mm), tape.fuse_meta);
    const auto h_cross = forward(cv.fuse_cross, concat2(h_img, h_meta), tape.fuse_cross);
    tape.y = forward(cv.judge, h_cross, tape.judge)[0];
    return tape.y;
}

double verify(const cv_model& cv, const metadata_encoder& enc, const evidence_set& evidence,
              std::span<const float> image, std::span<const double> m_hat) {
    cv_tape tape;
    return cv_forward(cv, enc, evidence, image, m_hat, tape);
}

void cv_grads::zero() {
    agg_img.zero();
    agg_meta.zero();
    fuse_img.zero();
    fuse_meta.zero();
    fuse_cross.zero();
    judge.zero();
}

void cv_grads::scale(double s) {
    agg_img.scale(s);
    agg_meta.scale(s);
    fuse_img.scale(s);
    fuse_meta.scale(s);
    fuse_cross.scale(s);
    judge.scale(s);
}

cv_grads make_cv_grads(const cv_model& cv) {
    cv_grads g;
    g.agg_img = make_grads(cv.agg_img);
    g.agg_meta = make_grads(cv.agg_meta);
    g.fuse_img = make_grads(cv.fuse_img);
    g.fuse_meta = make_grads(cv.fuse_meta);
    g.fuse_cross = make_grads(cv.fuse_cross);
    g.judge = make_grads(cv.judge);
    return g;
}

void cv_backward(const cv_model& cv, const cv_tape& tape, double dy, cv_grads* param_grads,
                 cv_input_grads* input_grads) {
    cv_grads scratch;
    cv_grads& g = param_grads ? *param_grads : scratch;
    if (!param_grads) g = make_cv_grads(cv);

    const std::vector<double> dyv{dy};
    const auto d_hcross = backward(cv.judge, tape.judge, dyv, g.judge);
    const auto d_fuse_in = backward(cv.fuse_cross, tape.fuse_cross, d_hcross, g.fuse_cross);

    const std::size_t fuse = cv.fuse_img.output_size();
    const std::span<const double> d_himg(d_fuse_in.data(), fuse);
    const std::span<const double> d_hmeta(d_fuse_in.data() + fuse, fuse);

    const auto d_img_in = backward(cv.fuse_img, tape.fuse_img, d_himg, g.fuse_img);
    const auto d_meta_in = backward(cv.fuse_meta, tape.fuse_meta, d_hmeta, g.fuse_meta);

    const std::size_t h = cv.agg_img.output_size();
    // Siamese sharing: both image-side aggregation tapes accumulate into the
    // same agg_img parameter gradients, likewise agg_meta.
    const auto d_x_ii = backward(cv.agg_img, tape.agg_ii, {d_img_in.data(), h}, g.agg_img);
    const auto d_x_im = backward(cv.agg_img, tape.agg_im, {d_img_in.data() + h, h}, g.agg_img);
    const auto d_x_mi = backward(cv.agg_meta, tape.agg_mi, {d_meta_in.data(), h}, g.agg_meta);
    const auto d_x_mm = backward(cv.agg_meta, tape.agg_mm, {d_meta_in.data() + h, h}, g.agg_meta);
    (void)d_x_ii;
    (void)d_x_im;

    if (input_grads) {
        const std::size_t d_m = cv.d_m;
        input_grads->d_m_hat.assign(d_m, 0.0);
        input_grads->d_meta_by_image.assign(cv.k, std::vector<double>(d_m, 0.0));
        input_grads->d_meta_by_metadata.assign(cv.k, std::vector<double>(d_m, 0.0));
        for (std::size_t d = 0; d < d_m; ++d)
            input_grads->d_m_hat[d] = d_x_mi[d] + d_x_mm[d];
        for (std::uint32_t k = 0; k < cv.k; ++k)
            for (std::size_t d = 0; d < d_m; ++d) {
                input_grads->d_meta_by_image[k][d] = d_x_mi[(k + 1) * d_m + d];
                input_grads->d_meta_by_metadata[k][d] = d_x_mm[(k + 1) * d_m + d];
            }
    }
}

std::vector<std::span<float>> collect_parameters(cv_model& cv) {
    std::vector<std::span<float>> out;
    for (dense_net* net : {&cv.agg_img, &cv.agg_meta, &cv.fuse_img, &cv.fuse_meta, &cv.fuse_cross,
                           &cv.judge}) {
        auto part = collect_parameters(*net);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

std::vector<std::span<const double>> collect_gradients(const cv_grads& grads) {
    std::vector<std::span<const double>> out;
    for (const net_grads* g : {&grads.agg_img, &grads.agg_meta, &grads.fuse_img, &grads.fuse_meta,
                               &grads.fuse_cross, &grads.judge}) {
        auto part = collect_gradients(*g);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

std::vector<std::span<float>> collect_parameters(mg_model& mg) { return collect_parameters(mg.cssn); }

verify_outcome verify_package(const cv_model& cv, const metadata_encoder& enc,
                              const index_model& idx, std::span<const float> image,
                              std::uint32_t claimed_metadata_id,
                              std::optional<std::uint64_t> package_id,
                              const search_params& params) {
    if (idx.meta_map.find(claimed_metadata_id) == idx.meta_map.end()) {
        // A claim with no supporting reference stratum cannot be
        // corroborated; report it as suspect rather than erroring the batch.
        return {0.0, true};
    }
    const auto ev = gather_evidence(idx, image, claimed_metadata_id, cv.k, package_id, params);
    const auto m_hat = to_m_hat(enc.row(claimed_metadata_id));
    return {verify(cv, enc, ev, image, m_hat), false};
}

} // namespace aird
