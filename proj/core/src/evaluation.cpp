#include "aird/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "aird/training.hpp"
#include "json.hpp"

namespace aird {

double f1(std::span<const int> preds, std::span<const int> labels, int positive_class) {
    if (preds.size() != labels.size()) throw error("f1: size mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool p = preds[i] == positive_class;
        const bool t = labels[i] == positive_class;
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
    }
    if (tp == 0) return 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
    if (preds.size() != labels.size() || preds.empty()) throw error("accuracy: bad inputs");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size() || scores.empty()) throw error("auc: bad inputs");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::size_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l == 1 ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0) throw error("auc: needs both classes");

    // Average ranks over tie groups, then the Mann-Whitney rank-sum form.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double tune_threshold(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size() || scores.empty()) throw error("tune_threshold: bad inputs");
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l == 1;
    if (n_pos == 0 || n_pos == labels.size()) throw error("tune_threshold: needs both classes");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Cut c predicts label 1 for the items ranked >= c. Scanning cuts in
    // ascending order makes the tie rule (lowest threshold) automatic.
    const std::size_t n = scores.size();
    std::vector<std::size_t> pos_prefix(n + 1, 0); // label-1 items below the cut
    for (std::size_t c = 0; c < n; ++c)
        pos_prefix[c + 1] = pos_prefix[c] + (labels[order[c]] == 1 ? 1 : 0);

    double best_threshold = 0.0;
    std::size_t best_correct = 0;
    bool found = false;
    for (std::size_t c = 0; c <= n; ++c) {
        // Equal scores cannot be separated; only cut between distinct ones.
        if (c > 0 && c < n && scores[order[c - 1]] == scores[order[c]]) continue;
        const std::size_t correct = (c - pos_prefix[c])      // label 0 below the cut
                                    + (n_pos - pos_prefix[c]); // label 1 at or above it
        double threshold;
        if (c == 0) threshold = scores[order.front()] - 1.0;
        else if (c == n) threshold = scores[order.back()] + 1.0;
        else threshold = (scores[order[c - 1]] + scores[order[c]]) / 2.0;
        if (!found || correct > best_correct) {
            found = true;
            best_correct = correct;
            best_threshold = threshold;
        }
    }
    return best_threshold;
}

double precision_at_k(std::span<const retrieval_run> runs, std::size_t K) {
    if (K == 0) throw error("precision_at_k: K must be >= 1");
    if (runs.empty()) return 0.0;
    double total = 0.0;
    for (const auto& run : runs) {
        std::size_t rel = 0;
        for (std::size_t r = 0; r < std::min(K, run.relevant.size()); ++r) rel += run.relevant[r] != 0;
        total += static_cast<double>(rel) / static_cast<double>(K);
    }
    return total / static_cast<double>(runs.size());
}

double map_at_k(std::span<const retrieval_run> runs, std::size_t K) {
    if (K == 0) throw error("map_at_k: K must be >= 1");
    if (runs.empty()) return 0.0;
    double total = 0.0;
    for (const auto& run : runs) {
        const std::size_t denom = std::min(K, run.total_relevant);
        if (denom == 0) continue;
        double ap = 0.0;
        std::size_t rel_so_far = 0;
        for (std::size_t r = 0; r < std::min(K, run.relevant.size()); ++r) {
            if (run.relevant[r] == 0) continue;
            ++rel_so_far;
            ap += static_cast<double>(rel_so_far) / static_cast<double>(r + 1);
        }
        total += ap / static_cast<double>(denom);
    }
    return total / static_cast<double>(runs.size());
}

retrieval_eval retrieval_quality(const index_model& idx, const dataset& queries, std::size_t K,
                                 bool exclude_self, const search_params& params) {
    std::vector<retrieval_run> runs;
    runs.reserve(queries.packages.size());
    for (const auto& pkg : queries.packages) {
        const auto hits = exclude_self ? search_excluding_package(idx, pkg.image, K, pkg.id, params)
                                       : search(idx, pkg.image, K, params);
        retrieval_run run;
        for (const auto& h : hits)
            run.relevant.push_back(idx.metadata_of(h.package_id) == pkg.metadata_id ? 1 : 0);
        auto it = idx.meta_map.find(pkg.metadata_id);
        std::size_t total = it == idx.meta_map.end() ? 0 : it->second.size();
        if (exclude_self && it != idx.meta_map.end() && idx.slot_of.count(pkg.id) != 0 && total > 0)
            --total;
        run.total_relevant = total;
        runs.push_back(std::move(run));
    }
    retrieval_eval out;
    out.map = map_at_k(runs, K);
    out.precision = precision_at_k(runs, K);
    return out;
}

eval_set build_eval_set(const dataset& ds, const index_model& idx, std::uint64_t seed,
                        const search_params& params) {
    rng gen(seed);
    eval_set out;
    out.instances.reserve(ds.packages.size() * 3);
    for (std::size_t i = 0; i < ds.packages.size(); ++i) {
        const auto& pkg = ds.packages[i];
        out.instances.push_back({i, pkg.id, pkg.metadata_id, false, provenance::real});
        const auto m_r = sample_easy_negative(ds, pkg, gen);
        out.instances.push_back({i, pkg.id, m_r, true, provenance::random_neg});
        const auto m_c = hard_negative(idx, pkg, params);
        out.instances.push_back({i, pkg.id, m_c, true, provenance::hard_neg});
    }
    return out;
}

scored baseline_b1(const index_model& idx, std::span<const float> image,
                   std::optional<std::uint64_t> self_id, std::uint32_t claimed, std::size_t K,
                   const search_params& params) {
    const auto hits = self_id ? search_excluding_package(idx, image, K, *self_id, params)
                              : search(idx, image, K, params);
    if (hits.empty()) return {0.0, true};
    std::size_t match = 0;
    for (const auto& h : hits) match += idx.metadata_of(h.package_id) == claimed;
    return {static_cast<double>(match) / static_cast<double>(hits.size()), false};
}

scored baseline_b2(const index_model& idx, std::span<const float> image, std::uint32_t claimed,
                   std::size_t K, const search_params& params) {
    (void)params;
    if (idx.meta_map.find(claimed) == idx.meta_map.end()) return {0.0, true};
    const auto hits = lookup_by_metadata(idx, claimed, K, image);
    double total = 0.0;
    for (const auto& h : hits) total += h.similarity;
    return {total / static_cast<double>(hits.size()), false};
}

scored baseline_b3(const index_model& idx, std::span<const float> image,
                   std::optional<std::uint64_t> self_id, std::uint32_t claimed, std::size_t K,
                   const search_params& params) {
    if (idx.meta_map.find(claimed) == idx.meta_map.end()) return {0.0, true};
    const auto img_hits = self_id ? search_excluding_package(idx, image, K, *self_id, params)
                                  : search(idx, image, K, params);
    const auto meta_hits = lookup_by_metadata(idx, claimed, K, image);
    if (img_hits.empty()) return {0.0, true};
    double total = 0.0;
    for (const auto& a : img_hits)
        for (const auto& b : meta_hits)
            total += cosine(idx.vector_of(a.package_id), idx.vector_of(b.package_id));
    return {total / static_cast<double>(img_hits.size() * meta_hits.size()), false};
}

scored baseline_b4(const index_model& idx, std::span<const float> image,
                   std::optional<std::uint64_t> self_id, std::uint32_t claimed, std::size_t K,
                   const search_params& params) {
    // Metadata-based retrievals all carry the claimed id, so each image
    // retrieval contributes K identical comparisons against the claim.
    const auto hits = self_id ? search_excluding_package(idx, image, K, *self_id, params)
                              : search(idx, image, K, params);
    if (hits.empty()) return {0.0, true};
    std::size_t match = 0;
    for (const auto& h : hits) match += idx.metadata_of(h.package_id) == claimed;
    return {static_cast<double>(match * K) / static_cast<double>(hits.size() * K), false};
}

mp_model train_mp(std::span<const package> packages, std::uint32_t dim, std::uint32_t vocab_size,
                  const mp_config& cfg) {
    if (packages.empty()) throw error("train_mp: empty training set");
    if (vocab_size == 0) throw error("train_mp: empty vocabulary");

    rng gen(cfg.seed);
    mp_model mp;
    mp.net = make_dense_net(dim, {cfg.hidden1, cfg.hidden2, vocab_size},
                            {activation::relu, activation::relu, activation::linear}, gen);

    auto params = collect_parameters(mp.net);
    adam_state opt = make_adam({cfg.lr}, params);
    net_grads grads = make_grads(mp.net);

    std::vector<std::size_t> order(packages.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        gen.shuffle(order);
        for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
            const std::size_t len = std::min<std::size_t>(cfg.batch_size, order.size() - off);
            grads.zero();
            for (std::size_t b = 0; b < len; ++b) {
                const auto& pkg = packages[order[off + b]];
                const std::vector<double> x(pkg.image.begin(), pkg.image.end());
                forward_tape tape;
                const auto logits = forward(mp.net, x, tape);
                const auto xr = softmax_xent(logits, pkg.metadata_id);
                backward(mp.net, tape, xr.dlogits, grads);
            }
            grads.scale(1.0 / static_cast<double>(len));
            adam_step(params, collect_gradients(grads), opt);
        }
    }
    return mp;
}

double mp_score(const mp_model& mp, std::span<const float> image, std::uint32_t claimed) {
    const std::vector<double> x(image.begin(), image.end());
    const auto logits = forward(mp.net, x);
    if (claimed >= logits.size()) return 0.0;
    const double m = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double l : logits) total += std::exp(l - m);
    return std::exp(logits[claimed] - m) / total;
}

std::uint32_t mp_predict(const mp_model& mp, std::span<const float> image) {
    const std::vector<double> x(image.begin(), image.end());
    const auto logits = forward(mp.net, x);
    return static_cast<std::uint32_t>(std::max_element(logits.begin(), logits.end()) -
                                      logits.begin());
}

namespace {

model_metrics metrics_for(std::span<const double> scores, std::span<const int> labels_real,
                          double threshold) {
    model_metrics m;
    m.threshold = threshold;
    std::vector<int> preds_real(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) preds_real[i] = scores[i] > threshold ? 1 : 0;
    std::vector<int> preds_fake(scores.size()), labels_fake(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        preds_fake[i] = 1 - preds_real[i];
        labels_fake[i] = 1 - labels_real[i];
    }
    m.f1_tamp = f1(preds_fake, labels_fake, 1);
    m.f1_clean = f1(preds_real, {labels_real.data(), labels_real.size()}, 1);
    m.acc = accuracy(preds_real, labels_real);
    m.auc_score = auc(scores, labels_real);
    return m;
}

} // namespace

eval_report evaluate(const std::vector<scorer>& scorers, const eval_set& test_set,
                     const dataset& test_ds, const eval_set* train_set,
                     const dataset* train_ds) {
    eval_report report;
    std::vector<int> labels_real;
    labels_real.reserve(test_set.instances.size());
    for (const auto& inst : test_set.instances) labels_real.push_back(inst.fake ? 0 : 1);

    for (const auto& s : scorers) {
        std::vector<double> scores;
        scores.reserve(test_set.instances.size());
        for (const auto& inst : test_set.instances) scores.push_back(s.fn(test_ds, inst).score);

        double threshold = 0.5;
        if (s.tuned) {
            if (!train_set || !train_ds)
                throw error("evaluate: scorer '" + s.name + "' needs train instances for tuning");
            std::vector<double> train_scores;
            std::vector<int> train_labels;
            train_scores.reserve(train_set->instances.size());
            for (const auto& inst : train_set->instances) {
                train_scores.push_back(s.fn(*train_ds, inst).score);
                train_labels.push_back(inst.fake ? 0 : 1);
            }
            threshold = tune_threshold(train_scores, train_labels);
        }
        report.models.emplace_back(s.name, metrics_for(scores, labels_real, threshold));
    }
    return report;
}

std::string report_to_json(const eval_report& report) {
    nlohmann::ordered_json j;
    j["k"] = report.k;
    j["retrieval"] = {{"map_at_k", report.map_at_k}, {"precision_at_k", report.precision_at_k}};
    nlohmann::ordered_json models;
    for (const auto& [name, m] : report.models) {
        models[name] = {{"f1_tamp", m.f1_tamp},
                        {"f1_clean", m.f1_clean},
                        {"acc", m.acc},
                        {"auc", m.auc_score},
                        {"threshold", m.threshold}};
    }
    j["models"] = models;
    return j.dump(2) + "\n";
}

std::string report_to_table(const eval_report& report) {
    std::ostringstream out;
    char buf[64];
    out << "Metric     ";
    for (const auto& [name, m] : report.models) {
        std::snprintf(buf, sizeof(buf), " %10s", name.c_str());
        out << buf;
    }
    out << '\n';
    const auto row = [&](const char* label, double model_metrics::* field) {
        std::snprintf(buf, sizeof(buf), "%-11s", label);
        out << buf;
        for (const auto& [name, m] : report.models) {
            std::snprintf(buf, sizeof(buf), " %10.4f", m.*field);
            out << buf;
        }
        out << '\n';
    };
    row("F1-tamp", &model_metrics::f1_tamp);
    row("F1-clean", &model_metrics::f1_clean);
    row("ACC", &model_metrics::acc);
    row("AUC", &model_metrics::auc_score);
    std::snprintf(buf, sizeof(buf), "MAP@%u %.4f | Precision@%u %.4f\n", report.k, report.map_at_k,
                  report.k, report.precision_at_k);
    out << buf;
    return out.str();
}

} // namespace aird
