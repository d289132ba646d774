#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aird/neural.hpp"
#include "aird/vecindex.hpp"

namespace aird {

// Learnable table mapping each metadata id to a dense vector. Trained as
// part of the counterfeiter and shared with the detector so metadata
// semantics stay consistent across both.
struct metadata_encoder {
    std::uint32_t vocab_size = 0;
    std::uint32_t d_m = 0;
    std::vector<float> table; // vocab_size x d_m

    std::span<float> row(std::uint32_t id);
    std::span<const float> row(std::uint32_t id) const;
};

metadata_encoder make_metadata_encoder(std::uint32_t vocab_size, std::uint32_t d_m, rng& gen);

// Returns a copy of the id's table row.
std::vector<float> encode_metadata(const metadata_encoder& enc, std::uint32_t id);

// One fake candidate: a reference package whose image is similar to the
// query but whose metadata differs.
struct candidate {
    std::uint64_t package_id = 0;
    std::uint32_t metadata_id = 0;
    std::vector<float> image;
    std::vector<float> metadata; // encoder row at fetch/refresh time
    double similarity = 0.0;
};

struct candidate_set {
    std::vector<candidate> items;
    std::size_t k() const { return items.size(); }
};

// Candidacy scorer: two fully-connected layers over the concatenated
// (query image, query metadata, candidate image, candidate metadata).
struct mg_model {
    dense_net cssn;
    std::uint32_t d_i = 0;
    std::uint32_t d_m = 0;
};

struct mg_dims {
    std::uint32_t cssn_hidden1 = 256;
    std::uint32_t cssn_hidden2 = 64;
};

mg_model make_mg(std::uint32_t d_i, std::uint32_t d_m, const mg_dims& dims, rng& gen);

// The K most image-similar packages with metadata differing from the
// query's, padded by cycling to exactly K entries, with metadata embeddings
// attached from the encoder.
candidate_set fetch_fake_candidates(const index_model& idx, const metadata_encoder& enc,
                                    std::span<const float> query_image,
                                    std::uint32_t query_metadata_id, std::size_t K,
                                    const search_params& params = {});

// Re-reads candidate metadata embeddings from the encoder; called before
// every scoring pass so encoder updates propagate.
void refresh_candidate_metadata(candidate_set& candidates, const metadata_encoder& enc);

double cssn_score(const mg_model& mg, std::span<const float> query_image,
                  std::span<const float> query_metadata, std::span<const float> candidate_image,
                  std::span<const float> candidate_metadata);

// Near-one-hot softmax weights over candidate scores.
struct choice_distribution {
    std::vector<double> scores;
    std::vector<double> weights;
    double tau = 0.0;

    std::size_t argmax() const;
};

// Fabricated metadata plus everything backward needs.
struct fabrication {
    std::vector<double> metadata; // m-tilde, the convex combination
    choice_distribution choice;
    std::vector<forward_tape> cssn_tapes; // one per candidate
};

fabrication fabricate(const mg_model& mg, const candidate_set& candidates,
                      std::span<const float> query_image, std::span<const float> query_metadata,
                      double tau);

struct fabrication_grads {
    net_grads cssn;
    std::vector<double> d_query_metadata;
    std::vector<std::vector<double>> d_candidate_metadata; // K x d_m
};

fabrication_grads make_fabrication_grads(const mg_model& mg, std::size_t K);

// Routes d(loss)/d(m-tilde) through the convex combination and the choice
// softmax into CSSN parameters and the metadata inputs. Image inputs are
// fixed encoder outputs and receive no gradient.
void fabricate_backward(const mg_model& mg, const fabrication& fab, const candidate_set& candidates,
                        std::span<const float> query_image, std::span<const float> query_metadata,
                        std::span<const double> d_metadata, fabrication_grads& grads);

} // namespace aird
