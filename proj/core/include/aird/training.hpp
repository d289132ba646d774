#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "aird/checkpoint.hpp"
#include "aird/counterfeiter.hpp"
#include "aird/detector.hpp"

namespace aird {

enum class train_mode { adversarial, nad };
enum class mg_loss_variant { nonsaturating, saturating };

struct train_config {
    std::uint32_t k = 3;
    double tau = 0.1;
    std::uint32_t epochs = 50;
    std::uint32_t batch_size = 64;
    float lr_cv = 1e-3f;
    float lr_mg = 1e-3f;
    // The shared encoder moves slower than either player to keep the
    // encodings consistent while both depend on them.
    float lr_encoder = 1e-4f;
    // Counterfeiter steps per verifier step.
    std::uint32_t mg_ratio = 1;
    std::uint64_t seed = 0;
    train_mode mode = train_mode::adversarial;
    mg_loss_variant mg_loss = mg_loss_variant::nonsaturating;
    double val_fraction = 0.1;
    std::uint32_t patience = 5;
    std::uint32_t d_m = 32;
    mg_dims mg_widths;
    cv_dims cv_widths;
    search_params retrieval;
};

// Frozen-index retrievals precomputed per training package: fake-candidate
// ids for the counterfeiter, image-based evidence ids for the detector, and
// the hard-negative metadata id.
struct cache_entry {
    std::vector<std::uint64_t> fake_candidates;
    std::vector<std::uint64_t> by_image;
    std::uint32_t hard_negative = 0;
};

struct retrieval_cache {
    std::vector<cache_entry> entries; // aligned with the dataset's packages
};

retrieval_cache precompute_retrievals(const index_model& idx, const dataset& ds, std::size_t K,
                                      const search_params& params = {});

// Uniform over the vocabulary excluding the package's own id.
std::uint32_t sample_easy_negative(const dataset& ds, const package& pkg, rng& gen);

// Metadata id of the most similar image-based retrieval whose metadata
// differs from the package's.
std::uint32_t hard_negative(const index_model& idx, const package& pkg,
                            const search_params& params = {});

// Lazily updated per-row adaptive moments for the encoder table: rows not
// touched by a step keep their bits.
struct encoder_adam {
    adam_config cfg;
    std::vector<std::uint64_t> t;
    std::vector<float> m;
    std::vector<float> v;
};

encoder_adam make_encoder_adam(const adam_config& cfg, const metadata_encoder& enc);
void encoder_adam_step(metadata_encoder& enc,
                       const std::map<std::uint32_t, std::vector<double>>& row_grads,
                       encoder_adam& state);

struct cv_loss_components {
    double real = 0.0;
    double generated = 0.0;
    double hard = 0.0;
    double easy = 0.0;
    double total() const { return real + generated + hard + easy; }
};

// Moving state for one training run. cv_step and mg_step each read a frozen
// opponent: cv_step updates only CV parameters, mg_step updates only the
// candidacy scorer and the encoder rows reachable through fabrication.
struct trainer {
    train_config cfg;
    const dataset* ds = nullptr;
    const index_model* idx = nullptr;
    retrieval_cache cache;
    std::optional<mg_model> mg;
    cv_model cv;
    metadata_encoder encoder;
    adam_state cv_opt;
    std::optional<adam_state> mg_opt;
    encoder_adam enc_opt;
    rng gen{0};
};

trainer make_trainer(const train_config& cfg, const dataset& train_ds, const index_model& idx);

cv_loss_components cv_step(trainer& t, std::span<const std::size_t> batch);
double mg_step(trainer& t, std::span<const std::size_t> batch);

struct epoch_stats {
    std::uint32_t epoch = 0;
    double cv_loss = 0.0;
    double mg_loss = 0.0;
    double val_auc = 0.0;
};

struct train_result {
    std::optional<mg_model> mg;
    cv_model cv;
    metadata_encoder encoder;
    std::vector<epoch_stats> history;
};

// Alternating adversarial optimization (or the non-adversarial ablation),
// with a held-out slice of the training split early-stopping on AUC.
train_result train(const train_config& cfg, const dataset& train_ds, const index_model& idx);

void save_history(const std::vector<epoch_stats>& history, const std::string& path);

} // namespace aird
