// Test-only oracles, independent of the library's retrieval and metric
// implementations: exhaustive scans, pairwise AUC counting, and helpers for
// building small datasets.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "aird/core.hpp"
#include "aird/rng.hpp"
#include "aird/vecindex.hpp"

namespace oracle {

inline double cosine(std::span<const float> a, std::span<const float> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
        nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

struct scored_id {
    std::uint64_t id;
    double similarity;
};

// Exhaustive cosine scan over a dataset with an optional keep-predicate,
// sorted by (similarity desc, id asc), truncated to k.
template <typename Pred>
std::vector<scored_id> scan_if(const aird::dataset& ds, std::span<const float> query,
                               std::size_t k, Pred keep) {
    std::vector<scored_id> hits;
    for (const auto& p : ds.packages) {
        if (!keep(p)) continue;
        hits.push_back({p.id, cosine(query, p.image)});
    }
    std::sort(hits.begin(), hits.end(), [](const scored_id& a, const scored_id& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.id < b.id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

inline std::vector<scored_id> scan(const aird::dataset& ds, std::span<const float> query,
                                   std::size_t k) {
    return scan_if(ds, query, k, [](const aird::package&) { return true; });
}

// O(n^2) pairwise Mann-Whitney AUC with half credit for ties.
inline double pairwise_auc(std::span<const double> scores, std::span<const int> labels) {
    double credit = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) credit += 1.0;
            else if (scores[i] == scores[j]) credit += 0.5;
        }
    }
    return credit / static_cast<double>(pairs);
}

// Exhaustive accuracy sweep over every candidate threshold (midpoints plus
// the two all-one-class sentinels); returns the best reachable accuracy.
inline double best_threshold_accuracy(std::span<const double> scores, std::span<const int> labels) {
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> candidates{sorted.front() - 1.0, sorted.back() + 1.0};
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
        if (sorted[i] != sorted[i + 1]) candidates.push_back((sorted[i] + sorted[i + 1]) / 2.0);
    double best = -1.0;
    for (double t : candidates) {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < scores.size(); ++i)
            correct += (scores[i] > t ? 1 : 0) == labels[i];
        best = std::max(best, static_cast<double>(correct) / static_cast<double>(scores.size()));
    }
    return best;
}

// Random unit vectors with a seeded generator.
inline std::vector<float> random_unit(std::uint32_t dim, aird::rng& gen) {
    std::vector<float> v(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : v) {
            x = static_cast<float>(gen.normal());
            norm += static_cast<double>(x) * x;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (auto& x : v) x = static_cast<float>(x / norm);
    return v;
}

inline aird::dataset random_dataset(std::size_t n, std::uint32_t dim, std::uint32_t entities,
                                    std::uint64_t seed) {
    aird::rng gen(seed);
    aird::dataset ds;
    ds.dim = dim;
    for (std::size_t i = 0; i < n; ++i) {
        aird::package p;
        p.id = i;
        p.image = random_unit(dim, gen);
        p.metadata_id = ds.vocab.intern("entity_" + std::to_string(i % entities));
        ds.packages.push_back(std::move(p));
    }
    return ds;
}

} // namespace oracle
