#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aird/core.hpp"
#include "aird/neural.hpp"
#include "aird/vecindex.hpp"

namespace aird {

// -- classification metrics --

// Harmonic mean of precision and recall for the given positive class;
// 0 when there are no predicted or no true positives.
double f1(std::span<const int> preds, std::span<const int> labels, int positive_class);

double accuracy(std::span<const int> preds, std::span<const int> labels);

// Rank-based (Mann-Whitney) AUC with half credit for ties; positive class
// is label 1. Throws for single-class label sets.
double auc(std::span<const double> scores, std::span<const int> labels);

// The decision threshold (predict label 1 when score > threshold) that
// maximizes accuracy, chosen from midpoints between adjacent distinct
// sorted scores plus the two all-one-class sentinels; ties resolve to the
// lowest threshold.
double tune_threshold(std::span<const double> scores, std::span<const int> labels);

// -- retrieval metrics --

// One query's top-K relevance pattern plus the total number of relevant
// packages the reference dataset holds for it.
struct retrieval_run {
    std::vector<char> relevant;
    std::size_t total_relevant = 0;
};

double precision_at_k(std::span<const retrieval_run> runs, std::size_t K);

// AP@K = sum_r P@r * rel(r) / min(K, total relevant), averaged over runs.
double map_at_k(std::span<const retrieval_run> runs, std::size_t K);

struct retrieval_eval {
    double map = 0.0;
    double precision = 0.0;
};

// Image-based retrieval quality over a query set: relevance means the
// retrieved package carries the query's metadata id.
retrieval_eval retrieval_quality(const index_model& idx, const dataset& queries, std::size_t K,
                                 bool exclude_self, const search_params& params = {});

// -- evaluation protocol --

enum class provenance : std::uint8_t { real = 0, random_neg = 1, hard_neg = 2 };

struct eval_instance {
    std::size_t package_index = 0; // into the evaluated dataset
    std::uint64_t package_id = 0;
    std::uint32_t claimed_metadata_id = 0;
    bool fake = false;
    provenance prov = provenance::real;
};

struct eval_set {
    std::vector<eval_instance> instances;
};

// Three instances per package: the real pair, a uniformly sampled wrong
// metadata id, and the nearest differing-metadata retrieval's id.
eval_set build_eval_set(const dataset& ds, const index_model& idx, std::uint64_t seed,
                        const search_params& params = {});

struct scored {
    double score = 0.0;
    bool unverifiable = false;
};

using score_fn = std::function<scored(const dataset& ds, const eval_instance& inst)>;

struct scorer {
    std::string name;
    score_fn fn;
    bool tuned = false; // tuned threshold on train scores vs fixed 0.5
};

// -- non-learning baselines --

// Fraction of the K image-based retrievals whose metadata id equals the
// claim. For structured ids, metadata similarity is exact match.
scored baseline_b1(const index_model& idx, std::span<const float> image,
                   std::optional<std::uint64_t> self_id, std::uint32_t claimed, std::size_t K,
                   const search_params& params = {});

// Mean exact cosine between the query image and the K images retrieved by
// the claimed metadata id.
scored baseline_b2(const index_model& idx, std::span<const float> image, std::uint32_t claimed,
                   std::size_t K, const search_params& params = {});

// Mean pairwise exact cosine between the image-retrieved and the
// metadata-retrieved image sets (K^2 pairs).
scored baseline_b3(const index_model& idx, std::span<const float> image,
                   std::optional<std::uint64_t> self_id, std::uint32_t claimed, std::size_t K,
                   const search_params& params = {});

// Similarity between the metadata of image-based retrievals and the
// metadata-based ones; with structured ids every metadata-side entry is the
// claim itself, so this reduces to B1 exactly.
scored baseline_b4(const index_model& idx, std::span<const float> image,
                   std::optional<std::uint64_t> self_id, std::uint32_t claimed, std::size_t K,
                   const search_params& params = {});

// -- metadata predictor --

struct mp_model {
    dense_net net;
};

struct mp_config {
    std::uint32_t hidden1 = 256;
    std::uint32_t hidden2 = 128;
    std::uint32_t epochs = 20;
    std::uint32_t batch_size = 64;
    float lr = 1e-3f;
    std::uint64_t seed = 0;
};

// Three fully-connected layers from image embedding to a vocabulary-sized
// softmax, trained with cross entropy.
mp_model train_mp(std::span<const package> packages, std::uint32_t dim, std::uint32_t vocab_size,
                  const mp_config& cfg);

// Predicted probability mass on the claimed id; 0 for out-of-vocabulary
// claims.
double mp_score(const mp_model& mp, std::span<const float> image, std::uint32_t claimed);

// Hard decision used for the matching rule: the claim is "real" when it is
// the argmax prediction.
std::uint32_t mp_predict(const mp_model& mp, std::span<const float> image);

// -- report --

struct model_metrics {
    double f1_tamp = 0.0;
    double f1_clean = 0.0;
    double acc = 0.0;
    double auc_score = 0.0;
    double threshold = 0.5;
};

struct eval_report {
    std::vector<std::pair<std::string, model_metrics>> models;
    std::uint32_t k = 0;
    double map_at_k = 0.0;
    double precision_at_k = 0.0;
};

// Scores every instance with every scorer, thresholds (0.5 fixed, or tuned
// on the train-set instances for scorers flagged `tuned`), and computes
// F1-tamp, F1-clean, ACC and AUC per model.
eval_report evaluate(const std::vector<scorer>& scorers, const eval_set& test_set,
                     const dataset& test_ds, const eval_set* train_set = nullptr,
                     const dataset* train_ds = nullptr);

std::string report_to_json(const eval_report& report);
std::string report_to_table(const eval_report& report);

} // namespace aird
