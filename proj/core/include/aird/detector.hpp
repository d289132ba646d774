#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "aird/counterfeiter.hpp"
#include "aird/neural.hpp"
#include "aird/vecindex.hpp"

namespace aird {

struct evidence_item {
    std::uint64_t package_id = 0;
    std::uint32_t metadata_id = 0;
    std::vector<float> image;
    double similarity = 0.0;
};

// Dual evidence: the K packages most similar to the query image, and the K
// packages of the claimed metadata stratum most similar to the query image.
// Both sides are padded by cycling to exactly K entries.
struct evidence_set {
    std::vector<evidence_item> by_image;
    std::vector<evidence_item> by_metadata;
};

// Consistency-verifier stack. The two aggregators are Siamese: one
// parameter set each, applied to both the image-retrieved and the
// metadata-retrieved evidence.
struct cv_model {
    dense_net agg_img;    // (K+1) * d_i -> hidden -> h
    dense_net agg_meta;   // (K+1) * d_m -> hidden -> h
    dense_net fuse_img;   // 2h -> fuse (relu)
    dense_net fuse_meta;  // 2h -> fuse (relu)
    dense_net fuse_cross; // 2*fuse -> fuse (relu)
    dense_net judge;      // fuse -> 1 (sigmoid)
    std::uint32_t d_i = 0;
    std::uint32_t d_m = 0;
    std::uint32_t k = 0;
};

struct cv_dims {
    std::uint32_t agg_hidden = 256;
    std::uint32_t agg_out = 64; // h
    std::uint32_t fuse_width = 64;
};

cv_model make_cv(std::uint32_t d_i, std::uint32_t d_m, std::uint32_t K, const cv_dims& dims,
                 rng& gen);

// Retrieves both evidence sets for a query. The query package itself, when
// indexed, is excluded from its own evidence via `exclude_package_id`.
// Throws "unknown metadata" for a claimed id absent from the index.
evidence_set gather_evidence(const index_model& idx, std::span<const float> image,
                             std::uint32_t claimed_metadata_id, std::size_t K,
                             std::optional<std::uint64_t> exclude_package_id = {},
                             const search_params& params = {});

struct cv_tape {
    forward_tape agg_ii, agg_im, agg_mi, agg_mm;
    forward_tape fuse_img, fuse_meta, fuse_cross, judge;
    double y = 0.0;
};

// Claimed-metadata input: an encoder row widened to doubles, or a fabricated
// metadata vector used as-is.
std::vector<double> to_m_hat(std::span<const float> row);

// Full verifier forward pass: within-modality aggregation of query and
// evidence (rank order preserved by concatenation), cross-modality fusion,
// sigmoid integrity judgement. Retrieved metadata enters as encoder rows;
// `m_hat` is the claimed metadata embedding (a fabricated metadata vector
// may be substituted directly).
double cv_forward(const cv_model& cv, const metadata_encoder& enc, const evidence_set& evidence,
                  std::span<const float> image, std::span<const double> m_hat, cv_tape& tape);

double verify(const cv_model& cv, const metadata_encoder& enc, const evidence_set& evidence,
              std::span<const float> image, std::span<const double> m_hat);

struct cv_grads {
    net_grads agg_img, agg_meta, fuse_img, fuse_meta, fuse_cross, judge;

    void zero();
    void scale(double s);
};

cv_grads make_cv_grads(const cv_model& cv);

// Gradients with respect to the metadata inputs, used to train the shared
// encoder (the m_hat path during the counterfeiter's step; every path in
// non-adversarial mode).
struct cv_input_grads {
    std::vector<double> d_m_hat;
    std::vector<std::vector<double>> d_meta_by_image;    // K x d_m
    std::vector<std::vector<double>> d_meta_by_metadata; // K x d_m
};

// Reverse pass for a taped cv_forward. `param_grads` may be null when only
// input gradients are needed (frozen verifier), and `input_grads` may be
// null when only parameter gradients are needed.
void cv_backward(const cv_model& cv, const cv_tape& tape, double dy, cv_grads* param_grads,
                 cv_input_grads* input_grads);

std::vector<std::span<float>> collect_parameters(cv_model& cv);
std::vector<std::span<const double>> collect_gradients(const cv_grads& grads);
std::vector<std::span<float>> collect_parameters(mg_model& mg);

struct verify_outcome {
    double score = 0.0;
    bool unverifiable = false;
};

// Gather-then-verify convenience entry point. A claimed metadata id absent
// from the reference index yields score 0 with the unverifiable flag
// instead of an error.
verify_outcome verify_package(const cv_model& cv, const metadata_encoder& enc,
                              const index_model& idx, std::span<const float> image,
                              std::uint32_t claimed_metadata_id,
                              std::optional<std::uint64_t> package_id = {},
                              const search_params& params = {});

} // namespace aird
