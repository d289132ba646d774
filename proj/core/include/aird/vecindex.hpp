#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "aird/core.hpp"

namespace aird {

// A retrieval result. Similarity is exact cosine in [-1, 1]; result lists
// are sorted by descending similarity, ties broken by ascending package id.
struct hit {
    std::uint64_t package_id = 0;
    double similarity = 0.0;
};

struct index_build_params {
    std::uint32_t nlist = 0; // 0 -> ceil(sqrt(n)) clamped to [16, 4096]
    std::uint32_t m_sub = 8;
    std::uint32_t bits = 8;
    std::uint32_t kmeans_iters = 20;
    std::uint64_t seed = 0;
};

struct search_params {
    std::uint32_t nprobe = 16;
    std::uint32_t shortlist = 0; // 0 -> 10 * k
};

// Inverted-file product-quantization index with exact cosine reranking over
// stored full vectors, plus an exact metadata-id -> package-ids map.
struct index_model {
    std::uint32_t dim = 0;
    std::uint32_t nlist = 0;
    std::uint32_t m_sub = 0;
    std::uint32_t bits = 0;

    std::vector<float> coarse;    // nlist x dim
    std::vector<float> codebooks; // m_sub x (1 << bits) x (dim / m_sub)

    std::vector<std::vector<std::uint64_t>> list_ids;  // per coarse cell
    std::vector<std::vector<std::uint8_t>> list_codes; // m_sub bytes per entry

    // Rerank storage, row r holds the vector of ids[r]; ids sorted ascending.
    std::vector<std::uint64_t> ids;
    std::vector<float> vectors;
    std::vector<std::uint32_t> metadata_ids;
    std::map<std::uint32_t, std::vector<std::uint64_t>> meta_map;

    std::unordered_map<std::uint64_t, std::size_t> slot_of; // rebuilt on load

    std::size_t size() const { return ids.size(); }
    std::uint32_t codewords() const { return 1u << bits; }
    std::uint32_t dsub() const { return dim / m_sub; }
    std::span<const float> vector_of(std::uint64_t package_id) const;
    std::uint32_t metadata_of(std::uint64_t package_id) const;
};

// Lloyd's iterations from seeded k-means++ starts; empty clusters are
// re-seeded from the point currently farthest from its centroid. Returns
// k centroids of `dim` components each. Throws for k > n or k == 0.
std::vector<float> kmeans(std::span<const float> points, std::size_t n, std::uint32_t dim,
                          std::uint32_t k, std::uint32_t iters, std::uint64_t seed);

index_model build_index(const dataset& ds, const index_build_params& params);

// Approximate scan of the nprobe nearest inverted lists, shortlist kept by
// asymmetric residual distance, then exact cosine rerank of the shortlist.
std::vector<hit> search(const index_model& idx, std::span<const float> query, std::size_t k,
                        const search_params& params = {});

// As search, but hits carrying the excluded metadata id are dropped before
// the top-k cut; the shortlist doubles (up to an exhaustive scan) until k
// survivors are found or the index is exhausted.
std::vector<hit> search_excluding_metadata(const index_model& idx, std::span<const float> query,
                                           std::size_t k, std::uint32_t excluded_metadata_id,
                                           const search_params& params = {});

// As search, but one package id is dropped (query self-exclusion).
std::vector<hit> search_excluding_package(const index_model& idx, std::span<const float> query,
                                          std::size_t k, std::uint64_t excluded_package_id,
                                          const search_params& params = {});

// The k packages of the given metadata stratum most similar to query_image
// by exact cosine. Fewer than k available packages are cycled to pad the
// result to length k. `exclude_package_id` drops one package before
// ranking; if that empties the stratum the exclusion is ignored.
std::vector<hit> lookup_by_metadata(const index_model& idx, std::uint32_t metadata_id,
                                    std::size_t k, std::span<const float> query_image,
                                    std::optional<std::uint64_t> exclude_package_id = {});

void save_index(const index_model& idx, const std::string& path);
index_model load_index(const std::string& path);

} // namespace aird
