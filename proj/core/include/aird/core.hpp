#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "aird/error.hpp"

namespace aird {

// One image embedding paired with one structured metadata identity. Images
// enter the system only as precomputed embedding vectors; after ingestion
// the embedding is unit L2 norm within 1e-5.
struct package {
    std::uint64_t id = 0;
    std::vector<float> image;
    std::uint32_t metadata_id = 0;
};

// Bidirectional map between metadata strings and dense integer ids, in
// first-appearance order.
class vocabulary {
public:
    std::uint32_t intern(const std::string& value);

    // Returns the id of a known value; throws aird::error for unknown ones.
    std::uint32_t id_of(const std::string& value) const;
    bool contains(const std::string& value) const { return index_.count(value) != 0; }
    const std::string& value_of(std::uint32_t id) const;
    std::uint32_t size() const { return static_cast<std::uint32_t>(values_.size()); }

    const std::vector<std::string>& values() const { return values_; }

private:
    std::vector<std::string> values_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

struct dataset {
    std::vector<package> packages;
    vocabulary vocab;
    std::uint32_t dim = 0;
};

struct split_pair {
    dataset train;
    dataset test;
};

// -- vector helpers (float storage, double accumulation) --

double l2_norm(std::span<const float> v);
double dot(std::span<const float> a, std::span<const float> b);

// Exact cosine similarity, clamped to [-1, 1].
double cosine(std::span<const float> a, std::span<const float> b);

// v / ||v||2. Throws aird::error("degenerate embedding") for the zero vector.
std::vector<float> normalize(std::span<const float> v);
void normalize_in_place(std::span<float> v);

// How far an ingested norm may sit from 1 before re-normalization kicks in.
// Rows already inside this band are kept bit-exact so that save/load
// round-trips reproduce embeddings exactly.
inline constexpr double unit_norm_tolerance = 1e-5;

// -- ingestion --
//
// Embeddings file: magic "AIRDEMB1", u32 row count, u32 dimension, then
// count x dimension float32 row-major, all little-endian.
// Metadata file: UTF-8 text, one `package_id<TAB>metadata_string` line per
// embedding row, line i describing row i.

dataset load_dataset(const std::string& embeddings_path, const std::string& metadata_path);

// Same files, but metadata strings resolve against an existing vocabulary
// (the reference dataset's) so ids stay aligned across splits.
dataset load_dataset_with_vocab(const std::string& embeddings_path,
                                const std::string& metadata_path,
                                const vocabulary& vocab);

void save_dataset(const dataset& ds, const std::string& embeddings_path,
                  const std::string& metadata_path);

// Per metadata id, ceil(fraction * n) packages go to train and the rest to
// test, shuffled deterministically by seed. Ids with a single package land
// entirely in train. Both halves share the input vocabulary.
split_pair split_stratified(const dataset& ds, double train_fraction, std::uint64_t seed);

} // namespace aird
