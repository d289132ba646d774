#include "aird/counterfeiter.hpp"

#include <algorithm>
#include <cmath>

namespace aird {

std::span<float> metadata_encoder::row(std::uint32_t id) {
    if (id >= vocab_size) throw error("metadata id out of range: " + std::to_string(id));
    return {table.data() + static_cast<std::size_t>(id) * d_m, d_m};
}

std::span<const float> metadata_encoder::row(std::uint32_t id) const {
    if (id >= vocab_size) throw error("metadata id out of range: " + std::to_string(id));
    return {table.data() + static_cast<std::size_t>(id) * d_m, d_m};
}

metadata_encoder make_metadata_encoder(std::uint32_t vocab_size, std::uint32_t d_m, rng& gen) {
    if (vocab_size == 0 || d_m == 0) throw config_error("encoder needs vocab_size > 0 and d_m > 0");
    metadata_encoder enc;
    enc.vocab_size = vocab_size;
    enc.d_m = d_m;
    enc.table.resize(static_cast<std::size_t>(vocab_size) * d_m);
    // Unit-norm rows: near-orthogonal ids with a crisp match/mismatch
    // contrast before any training.
    for (std::uint32_t r = 0; r < vocab_size; ++r) {
        auto row = enc.row(r);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (float& x : row) {
                x = static_cast<float>(gen.normal());
                norm += static_cast<double>(x) * x;
            }
        } while (norm < 1e-12);
        norm = std::sqrt(norm);
        for (float& x : row) x = static_cast<float>(x / norm);
    }
    return enc;
}

std::vector<float> encode_metadata(const metadata_encoder& enc, std::uint32_t id) {
    const auto r = enc.row(id);
    return {r.begin(), r.end()};
}

mg_model make_mg(std::uint32_t d_i, std::uint32_t d_m, const mg_dims& dims, rng& gen) {
    mg_model mg;
    mg.d_i = d_i;
    mg.d_m = d_m;
    mg.cssn = make_dense_net(2 * (static_cast<std::size_t>(d_i) + d_m),
                             {dims.cssn_hidden1, dims.cssn_hidden2, 1},
                             {activation::relu, activation::relu, activation::linear}, gen);
    return mg;
}

candidate_set fetch_fake_candidates(const index_model& idx, const metadata_encoder& enc,
                                    std::span<const float> query_image,
                                    std::uint32_t query_metadata_id, std::size_t K,
                                    const search_params& params) {
    if (K == 0) throw error("fetch_fake_candidates: K must be >= 1");
    const auto hits = search_excluding_metadata(idx, query_image, K, query_metadata_id, params);

    candidate_set out;
    out.items.reserve(K);
    for (std::size_t i = 0; i < K; ++i) {
        const hit& h = hits[i % hits.size()]; // cycle when fewer than K exist
        candidate c;
        c.package_id = h.package_id;
        c.metadata_id = idx.metadata_of(h.package_id);
        const auto v = idx.vector_of(h.package_id);
        c.image.assign(v.begin(), v.end());
        c.metadata = encode_metadata(enc, c.metadata_id);
        c.similarity = h.similarity;
        out.items.push_back(std::move(c));
    }
    return out;
}

void refresh_candidate_metadata(candidate_set& candidates, const metadata_encoder& enc) {
    for (auto& c : candidates.items) c.metadata = encode_metadata(enc, c.metadata_id);
}

namespace {

std::vector<double> cssn_input(std::span<const float> qi, std::span<const float> qm,
                               std::span<const float> ci, std::span<const float> cm) {
    std::vector<double> x;
    x.reserve(qi.size() + qm.size() + ci.size() + cm.size());
    x.insert(x.end(), qi.begin(), qi.end());
    x.insert(x.end(), qm.begin(), qm.end());
    x.insert(x.end(), ci.begin(), ci.end());
    x.insert(x.end(), cm.begin(), cm.end());
    return x;
}

} // namespace

double cssn_score(const mg_model& mg, std::span<const float> query_image,
                  std::span<const float> query_metadata, std::span<const float> candidate_image,
                  std::span<const float> candidate_metadata) {
    const auto x = cssn_input(query_image, query_metadata, candidate_image, candidate_metadata);
    return forward(mg.cssn, x)[0];
}

std::size_t choice_distribution::argmax() const {
    return static_cast<std::size_t>(
        std::max_element(weights.begin(), weights.end()) - weights.begin());
}

fabrication fabricate(const mg_model& mg, const candidate_set& candidates,
                      std::span<const float> query_image, std::span<const float> query_metadata,
                      double tau) {
    const std::size_t K = candidates.k();
    if (K == 0) throw error("fabricate: empty candidate set");

    fabrication fab;
    fab.choice.tau = tau;
    fab.choice.scores.resize(K);
    fab.cssn_tapes.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        const auto& c = candidates.items[k];
        const auto x = cssn_input(query_image, query_metadata, c.image, c.metadata);
        fab.choice.scores[k] = forward(mg.cssn, x, fab.cssn_tapes[k])[0];
    }
    fab.choice.weights = softmax_temperature(fab.choice.scores, tau);

    const std::size_t d_m = mg.d_m;
    fab.metadata.assign(d_m, 0.0);
    for (std::size_t d = 0; d < d_m; ++d) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k)
            acc += fab.choice.weights[k] * static_cast<double>(candidates.items[k].metadata[d]);
        fab.metadata[d] = acc;
    }
    return fab;
}

fabrication_grads make_fabrication_grads(const mg_model& mg, std::size_t K) {
    fabrication_grads g;
    g.cssn = make_grads(mg.cssn);
    g.d_query_metadata.assign(mg.d_m, 0.0);
    g.d_candidate_metadata.assign(K, std::vector<double>(mg.d_m, 0.0));
    return g;
}

void fabricate_backward(const mg_model& mg, const fabrication& fab, const candidate_set& candidates,
                        std::span<const float> query_image, std::span<const float> query_metadata,
                        std::span<const double> d_metadata, fabrication_grads& grads) {
    const std::size_t K = candidates.k();
    if (fab.cssn_tapes.size() != K || grads.d_candidate_metadata.size() != K)
        throw error("fabricate_backward: tape/grads mismatch");
    const std::size_t d_i = mg.d_i;
    const std::size_t d_m = mg.d_m;

    // Convex combination: d/dc_k = m_k . dm, d/dm_k += c_k * dm.
    std::vector<double> dweights(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        const auto& m_k = candidates.items[k].metadata;
        double acc = 0.0;
        auto& dmk = grads.d_candidate_metadata[k];
        for (std::size_t d = 0; d < d_m; ++d) {
            acc += static_cast<double>(m_k[d]) * d_metadata[d];
            dmk[d] += fab.choice.weights[k] * d_metadata[d];
        }
        dweights[k] = acc;
    }

    const auto dscores = softmax_temperature_backward(fab.choice.weights, dweights, fab.choice.tau);

    for (std::size_t k = 0; k < K; ++k) {
        const std::vector<double> dy{dscores[k]};
        const auto dx = backward(mg.cssn, fab.cssn_tapes[k], dy, grads.cssn);
        // Input layout: (query image, query metadata, candidate image,
        // candidate metadata); image slices are constants.
        for (std::size_t d = 0; d < d_m; ++d)
            grads.d_query_metadata[d] += dx[d_i + d];
        auto& dmk = grads.d_candidate_metadata[k];
        for (std::size_t d = 0; d < d_m; ++d)
            dmk[d] += dx[2 * d_i + d_m + d];
    }
    (void)query_image;
    (void)query_metadata;
}

} // namespace aird
