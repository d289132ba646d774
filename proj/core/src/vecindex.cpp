#include "aird/vecindex.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "aird/binio.hpp"
#include "aird/rng.hpp"

namespace aird {

namespace {

constexpr char index_magic[9] = "AIRDIDX1";
constexpr std::uint32_t index_version = 1;

double sqdist(const float* a, const float* b, std::uint32_t dim) {
    double acc = 0.0;
    for (std::uint32_t i = 0; i < dim; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

// Index of the nearest centroid, ties resolved to the lowest index.
std::uint32_t nearest(const float* x, const float* centroids, std::uint32_t k, std::uint32_t dim) {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::uint32_t c = 0; c < k; ++c) {
        const double d = sqdist(x, centroids + static_cast<std::size_t>(c) * dim, dim);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

} // namespace

std::vector<float> kmeans(std::span<const float> points, std::size_t n, std::uint32_t dim,
                          std::uint32_t k, std::uint32_t iters, std::uint64_t seed) {
    if (k == 0) throw error("kmeans: k must be positive");
    if (k > n) throw error("kmeans: k exceeds the number of points");
    if (iters == 0) throw error("kmeans: iters must be >= 1");
    if (points.size() != n * dim) throw error("kmeans: point buffer size mismatch");

    rng gen(seed);
    std::vector<float> centroids(static_cast<std::size_t>(k) * dim);
    const float* data = points.data();

    // k-means++ seeding.
    {
        const auto first = static_cast<std::size_t>(gen.uniform_index(n));
        std::copy_n(data + first * dim, dim, centroids.begin());
        std::vector<double> d2(n);
        for (std::size_t i = 0; i < n; ++i) d2[i] = sqdist(data + i * dim, centroids.data(), dim);
        for (std::uint32_t c = 1; c < k; ++c) {
            double total = 0.0;
            for (double d : d2) total += d;
            std::size_t chosen;
            if (total <= 0.0) {
                chosen = static_cast<std::size_t>(gen.uniform_index(n));
            } else {
                const double target = gen.uniform() * total;
                double acc = 0.0;
                chosen = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += d2[i];
                    if (acc >= target) {
                        chosen = i;
                        break;
                    }
                }
            }
            float* dst = centroids.data() + static_cast<std::size_t>(c) * dim;
            std::copy_n(data + chosen * dim, dim, dst);
            for (std::size_t i = 0; i < n; ++i)
                d2[i] = std::min(d2[i], sqdist(data + i * dim, dst, dim));
        }
    }

    std::vector<std::uint32_t> assign(n, 0);
    std::vector<double> sums(static_cast<std::size_t>(k) * dim);
    std::vector<std::size_t> counts(k);

    for (std::uint32_t it = 0; it < iters; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t a = nearest(data + i * dim, centroids.data(), k, dim);
            if (a != assign[i]) {
                assign[i] = a;
                changed = true;
            }
        }
        if (!changed && it > 0) break;

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            double* s = sums.data() + static_cast<std::size_t>(assign[i]) * dim;
            const float* x = data + i * dim;
            for (std::uint32_t d = 0; d < dim; ++d) s[d] += x[d];
            ++counts[assign[i]];
        }
        for (std::uint32_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            float* dst = centroids.data() + static_cast<std::size_t>(c) * dim;
            const double* s = sums.data() + static_cast<std::size_t>(c) * dim;
            for (std::uint32_t d = 0; d < dim; ++d)
                dst[d] = static_cast<float>(s[d] / static_cast<double>(counts[c]));
        }

        // Re-seed empty clusters from the point farthest from its centroid.
        for (std::uint32_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            double worst = -1.0;
            std::size_t worst_i = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[assign[i]] <= 1) continue; // do not empty another cluster
                const double d = sqdist(data + i * dim,
                                        centroids.data() + static_cast<std::size_t>(assign[i]) * dim, dim);
                if (d > worst) {
                    worst = d;
                    worst_i = i;
                }
            }
            if (worst < 0.0) break;
            std::copy_n(data + worst_i * dim, dim,
                        centroids.begin() + static_cast<std::size_t>(c) * dim);
            --counts[assign[worst_i]];
            assign[worst_i] = c;
            counts[c] = 1;
        }
    }
    return centroids;
}

std::span<const float> index_model::vector_of(std::uint64_t package_id) const {
    auto it = slot_of.find(package_id);
    if (it == slot_of.end()) throw error("package id not indexed: " + std::to_string(package_id));
    return {vectors.data() + it->second * dim, dim};
}

std::uint32_t index_model::metadata_of(std::uint64_t package_id) const {
    auto it = slot_of.find(package_id);
    if (it == slot_of.end()) throw error("package id not indexed: " + std::to_string(package_id));
    return metadata_ids[it->second];
}

index_model build_index(const dataset& ds, const index_build_params& params) {
    const std::size_t n = ds.packages.size();
    if (n == 0) throw error("cannot index an empty dataset");
    const std::uint32_t dim = ds.dim;
    if (params.m_sub == 0 || dim % params.m_sub != 0)
        throw config_error("embedding dimension must be divisible by m_sub");
    if (params.bits == 0 || params.bits > 8)
        throw config_error("bits must be in [1, 8]");

    index_model idx;
    idx.dim = dim;
    idx.m_sub = params.m_sub;
    idx.bits = params.bits;

    std::uint32_t nlist = params.nlist;
    if (nlist == 0) {
        nlist = static_cast<std::uint32_t>(std::ceil(std::sqrt(static_cast<double>(n))));
        nlist = std::clamp<std::uint32_t>(nlist, 16, 4096);
    }
    nlist = static_cast<std::uint32_t>(std::min<std::size_t>(nlist, n));
    idx.nlist = nlist;

    // Rows sorted by package id; the rerank stage and the serialized layout
    // both key off this order.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ds.packages[a].id < ds.packages[b].id;
    });

    idx.ids.resize(n);
    idx.metadata_ids.resize(n);
    idx.vectors.resize(n * dim);
    for (std::size_t r = 0; r < n; ++r) {
        const auto& p = ds.packages[order[r]];
        idx.ids[r] = p.id;
        idx.metadata_ids[r] = p.metadata_id;
        std::copy(p.image.begin(), p.image.end(), idx.vectors.begin() + r * dim);
        idx.slot_of.emplace(p.id, r);
        idx.meta_map[p.metadata_id].push_back(p.id);
    }
    if (idx.slot_of.size() != n) throw error("duplicate package ids in dataset");

    idx.coarse = kmeans(idx.vectors, n, dim, nlist, params.kmeans_iters, params.seed);

    std::vector<std::uint32_t> cell(n);
    for (std::size_t r = 0; r < n; ++r)
        cell[r] = nearest(idx.vectors.data() + r * dim, idx.coarse.data(), nlist, dim);

    // PQ codebooks are trained per sub-space on residuals against the
    // assigned coarse centroid.
    const std::uint32_t dsub = idx.dsub();
    const std::uint32_t ncode = idx.codewords();
    std::vector<float> residuals(n * dim);
    for (std::size_t r = 0; r < n; ++r) {
        const float* x = idx.vectors.data() + r * dim;
        const float* c = idx.coarse.data() + static_cast<std::size_t>(cell[r]) * dim;
        float* out = residuals.data() + r * dim;
        for (std::uint32_t d = 0; d < dim; ++d) out[d] = x[d] - c[d];
    }

    idx.codebooks.resize(static_cast<std::size_t>(params.m_sub) * ncode * dsub);
    std::vector<float> block(n * dsub);
    for (std::uint32_t s = 0; s < params.m_sub; ++s) {
        for (std::size_t r = 0; r < n; ++r)
            std::copy_n(residuals.data() + r * dim + s * dsub, dsub, block.begin() + r * dsub);
        const auto k_eff = static_cast<std::uint32_t>(std::min<std::size_t>(ncode, n));
        auto book = kmeans(block, n, dsub, k_eff, params.kmeans_iters, params.seed + 1 + s);
        // Pad to the declared 2^bits rows when fewer points than codewords
        // were available; encoding prefers the lowest index on ties, so the
        // copies are never selected.
        book.resize(static_cast<std::size_t>(ncode) * dsub);
        for (std::uint32_t c = k_eff; c < ncode; ++c)
            std::copy_n(book.begin() + static_cast<std::size_t>(k_eff - 1) * dsub, dsub,
                        book.begin() + static_cast<std::size_t>(c) * dsub);
        std::copy(book.begin(), book.end(),
                  idx.codebooks.begin() + static_cast<std::size_t>(s) * ncode * dsub);
    }

    idx.list_ids.resize(nlist);
    idx.list_codes.resize(nlist);
    for (std::size_t r = 0; r < n; ++r) {
        const std::uint32_t l = cell[r];
        idx.list_ids[l].push_back(idx.ids[r]);
        for (std::uint32_t s = 0; s < params.m_sub; ++s) {
            const float* block_r = residuals.data() + r * dim + s * dsub;
            const float* book = idx.codebooks.data() + static_cast<std::size_t>(s) * ncode * dsub;
            idx.list_codes[l].push_back(static_cast<std::uint8_t>(nearest(block_r, book, ncode, dsub)));
        }
    }
    return idx;
}

namespace {

// Shared scan core: probe, shortlist by asymmetric distance, exact rerank,
// then keep the best `k` hits passing `keep`.
std::vector<hit> scan(const index_model& idx, std::span<const float> query, std::size_t k,
                      std::uint32_t nprobe, std::size_t shortlist,
                      const std::function<bool(std::uint64_t, std::uint32_t)>& keep) {
    const std::size_t n = idx.size();
    if (n == 0) throw error("empty index");
    if (query.size() != idx.dim) throw error("query dimension mismatch");
    if (k == 0) return {};

    nprobe = std::clamp<std::uint32_t>(nprobe, 1, idx.nlist);
    shortlist = std::clamp<std::size_t>(shortlist, k, n);

    // Coarse stage: the nprobe nearest cells.
    std::vector<std::pair<double, std::uint32_t>> cells(idx.nlist);
    for (std::uint32_t c = 0; c < idx.nlist; ++c)
        cells[c] = {sqdist(query.data(), idx.coarse.data() + static_cast<std::size_t>(c) * idx.dim, idx.dim), c};
    std::partial_sort(cells.begin(), cells.begin() + nprobe, cells.end());

    const std::uint32_t dsub = idx.dsub();
    const std::uint32_t ncode = idx.codewords();
    std::vector<double> lut(static_cast<std::size_t>(idx.m_sub) * ncode);
    std::vector<float> residual(idx.dim);
    std::vector<std::pair<double, std::uint64_t>> approx;
    approx.reserve(shortlist * 2);

    for (std::uint32_t p = 0; p < nprobe; ++p) {
        const std::uint32_t l = cells[p].second;
        const auto& ids = idx.list_ids[l];
        if (ids.empty()) continue;
        const float* centroid = idx.coarse.data() + static_cast<std::size_t>(l) * idx.dim;
        for (std::uint32_t d = 0; d < idx.dim; ++d) residual[d] = query[d] - centroid[d];
        for (std::uint32_t s = 0; s < idx.m_sub; ++s) {
            const float* book = idx.codebooks.data() + static_cast<std::size_t>(s) * ncode * dsub;
            for (std::uint32_t c = 0; c < ncode; ++c)
                lut[static_cast<std::size_t>(s) * ncode + c] =
                    sqdist(residual.data() + s * dsub, book + static_cast<std::size_t>(c) * dsub, dsub);
        }
        const std::uint8_t* codes = idx.list_codes[l].data();
        for (std::size_t e = 0; e < ids.size(); ++e) {
            double d = 0.0;
            const std::uint8_t* code = codes + e * idx.m_sub;
            for (std::uint32_t s = 0; s < idx.m_sub; ++s)
                d += lut[static_cast<std::size_t>(s) * ncode + code[s]];
            approx.emplace_back(d, ids[e]);
        }
    }

    if (approx.size() > shortlist) {
        std::nth_element(approx.begin(), approx.begin() + shortlist, approx.end());
        approx.resize(shortlist);
    }

    // Exact rerank of the shortlist.
    std::vector<hit> hits;
    hits.reserve(approx.size());
    for (const auto& [d, id] : approx) {
        const std::size_t slot = idx.slot_of.at(id);
        if (keep && !keep(id, idx.metadata_ids[slot])) continue;
        hits.push_back({id, cosine(query, {idx.vectors.data() + slot * idx.dim, idx.dim})});
    }
    std::sort(hits.begin(), hits.end(), [](const hit& a, const hit& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.package_id < b.package_id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

std::vector<hit> filtered_search(const index_model& idx, std::span<const float> query,
                                 std::size_t k, const search_params& params,
                                 const std::function<bool(std::uint64_t, std::uint32_t)>& keep) {
    const std::size_t n = idx.size();
    if (n == 0) throw error("empty index");
    if (k == 0) return {};
    std::size_t shortlist = params.shortlist ? params.shortlist : 10 * k;
    std::uint32_t nprobe = params.nprobe;
    while (true) {
        const bool exhaustive = shortlist >= n;
        auto hits = scan(idx, query, k, exhaustive ? idx.nlist : nprobe, shortlist, keep);
        if (hits.size() >= k || exhaustive) return hits;
        shortlist = std::min(shortlist * 2, n);
    }
}

} // namespace

std::vector<hit> search(const index_model& idx, std::span<const float> query, std::size_t k,
                        const search_params& params) {
    std::size_t shortlist = params.shortlist ? params.shortlist : 10 * k;
    return scan(idx, query, k, params.nprobe, shortlist, nullptr);
}

std::vector<hit> search_excluding_metadata(const index_model& idx, std::span<const float> query,
                                           std::size_t k, std::uint32_t excluded_metadata_id,
                                           const search_params& params) {
    bool has_other = false;
    for (const auto& [meta, ids] : idx.meta_map)
        if (meta != excluded_metadata_id && !ids.empty()) {
            has_other = true;
            break;
        }
    if (!has_other) throw error("no counterfeit source: all indexed packages share the excluded metadata");
    return filtered_search(idx, query, k, params,
                           [excluded_metadata_id](std::uint64_t, std::uint32_t meta) {
                               return meta != excluded_metadata_id;
                           });
}

std::vector<hit> search_excluding_package(const index_model& idx, std::span<const float> query,
                                          std::size_t k, std::uint64_t excluded_package_id,
                                          const search_params& params) {
    return filtered_search(idx, query, k, params,
                           [excluded_package_id](std::uint64_t id, std::uint32_t) {
                               return id != excluded_package_id;
                           });
}

std::vector<hit> lookup_by_metadata(const index_model& idx, std::uint32_t metadata_id,
                                    std::size_t k, std::span<const float> query_image,
                                    std::optional<std::uint64_t> exclude_package_id) {
    auto it = idx.meta_map.find(metadata_id);
    if (it == idx.meta_map.end()) throw error("unknown metadata: " + std::to_string(metadata_id));
    if (k == 0) return {};

    std::vector<hit> hits;
    hits.reserve(it->second.size());
    for (std::uint64_t id : it->second) {
        if (exclude_package_id && id == *exclude_package_id) continue;
        hits.push_back({id, cosine(query_image, idx.vector_of(id))});
    }
    if (hits.empty()) {
        // The exclusion emptied the stratum; the query package is its own
        // only evidence.
        for (std::uint64_t id : it->second)
            hits.push_back({id, cosine(query_image, idx.vector_of(id))});
    }
    std::sort(hits.begin(), hits.end(), [](const hit& a, const hit& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.package_id < b.package_id;
    });
    if (hits.size() > k) {
        hits.resize(k);
    } else {
        const std::size_t avail = hits.size();
        for (std::size_t i = avail; i < k; ++i) hits.push_back(hits[i % avail]);
    }
    return hits;
}

void save_index(const index_model& idx, const std::string& path) {
    binary_writer out(path);
    out.magic(index_magic);
    out.u32(index_version);
    out.u32(idx.dim);
    out.u32(idx.nlist);
    out.u32(idx.m_sub);
    out.u32(idx.bits);
    out.f32_array(idx.coarse);
    out.f32_array(idx.codebooks);
    for (std::uint32_t l = 0; l < idx.nlist; ++l) {
        const auto& ids = idx.list_ids[l];
        out.u32(static_cast<std::uint32_t>(ids.size()));
        for (std::size_t e = 0; e < ids.size(); ++e) {
            out.u64(ids[e]);
            out.bytes({idx.list_codes[l].data() + e * idx.m_sub, idx.m_sub});
        }
    }
    out.u32(static_cast<std::uint32_t>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        out.u64(idx.ids[r]);
        out.f32_array({idx.vectors.data() + r * idx.dim, idx.dim});
    }
    out.u32(static_cast<std::uint32_t>(idx.meta_map.size()));
    for (const auto& [meta, ids] : idx.meta_map) {
        out.u32(meta);
        out.u32(static_cast<std::uint32_t>(ids.size()));
        for (std::uint64_t id : ids) out.u64(id);
    }
    out.finish();
}

index_model load_index(const std::string& path) {
    binary_reader in(path);
    in.expect_magic(index_magic);
    const std::uint32_t version = in.u32();
    if (version != index_version)
        throw io_error(path + ": unsupported index version " + std::to_string(version));

    index_model idx;
    idx.dim = in.u32();
    idx.nlist = in.u32();
    idx.m_sub = in.u32();
    idx.bits = in.u32();
    if (idx.dim == 0 || idx.nlist == 0 || idx.m_sub == 0 || idx.bits == 0 || idx.bits > 8 ||
        idx.dim % idx.m_sub != 0)
        throw io_error(path + ": corrupt index header");

    idx.coarse.resize(static_cast<std::size_t>(idx.nlist) * idx.dim);
    in.f32_array(idx.coarse);
    idx.codebooks.resize(static_cast<std::size_t>(idx.m_sub) * idx.codewords() * idx.dsub());
    in.f32_array(idx.codebooks);

    idx.list_ids.resize(idx.nlist);
    idx.list_codes.resize(idx.nlist);
    for (std::uint32_t l = 0; l < idx.nlist; ++l) {
        const std::uint32_t len = in.u32();
        idx.list_ids[l].resize(len);
        idx.list_codes[l].resize(static_cast<std::size_t>(len) * idx.m_sub);
        for (std::uint32_t e = 0; e < len; ++e) {
            idx.list_ids[l][e] = in.u64();
            in.bytes({idx.list_codes[l].data() + static_cast<std::size_t>(e) * idx.m_sub, idx.m_sub});
        }
    }

    const std::uint32_t n = in.u32();
    idx.ids.resize(n);
    idx.vectors.resize(static_cast<std::size_t>(n) * idx.dim);
    idx.metadata_ids.assign(n, 0);
    for (std::uint32_t r = 0; r < n; ++r) {
        idx.ids[r] = in.u64();
        in.f32_array({idx.vectors.data() + static_cast<std::size_t>(r) * idx.dim, idx.dim});
        idx.slot_of.emplace(idx.ids[r], r);
    }
    if (idx.slot_of.size() != n) throw io_error(path + ": duplicate package ids");

    const std::uint32_t entries = in.u32();
    for (std::uint32_t e = 0; e < entries; ++e) {
        const std::uint32_t meta = in.u32();
        const std::uint32_t len = in.u32();
        auto& ids = idx.meta_map[meta];
        ids.resize(len);
        for (std::uint32_t i = 0; i < len; ++i) {
            ids[i] = in.u64();
            auto slot = idx.slot_of.find(ids[i]);
            if (slot == idx.slot_of.end()) throw io_error(path + ": meta_map references unknown package");
            idx.metadata_ids[slot->second] = meta;
        }
    }
    return idx;
}

} // namespace aird
