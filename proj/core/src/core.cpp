#include "aird/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "aird/binio.hpp"
#include "aird/rng.hpp"

namespace aird {

std::uint32_t vocabulary::intern(const std::string& value) {
    auto it = index_.find(value);
    if (it != index_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(values_.size());
    values_.push_back(value);
    index_.emplace(value, id);
    return id;
}

std::uint32_t vocabulary::id_of(const std::string& value) const {
    auto it = index_.find(value);
    if (it == index_.end()) throw error("unknown metadata value: " + value);
    return it->second;
}

const std::string& vocabulary::value_of(std::uint32_t id) const {
    if (id >= values_.size()) throw error("metadata id out of range");
    return values_[id];
}

double l2_norm(std::span<const float> v) {
    double acc = 0.0;
    for (float x : v) acc += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(acc);
}

double dot(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

double cosine(std::span<const float> a, std::span<const float> b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

void normalize_in_place(std::span<float> v) {
    const double n = l2_norm(v);
    if (n == 0.0) throw error("degenerate embedding");
    for (float& x : v) x = static_cast<float>(static_cast<double>(x) / n);
}

std::vector<float> normalize(std::span<const float> v) {
    std::vector<float> out(v.begin(), v.end());
    normalize_in_place(out);
    return out;
}

namespace {

constexpr char embeddings_magic[9] = "AIRDEMB1";

struct metadata_record {
    std::uint64_t package_id;
    std::string value;
};

std::vector<metadata_record> read_metadata_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open: " + path);
    std::vector<metadata_record> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw io_error(path + ":" + std::to_string(lineno) + ": expected package_id<TAB>metadata");
        std::uint64_t pid = 0;
        try {
            std::size_t used = 0;
            pid = std::stoull(line.substr(0, tab), &used);
            if (used != tab) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw io_error(path + ":" + std::to_string(lineno) + ": bad package_id");
        }
        records.push_back({pid, line.substr(tab + 1)});
    }
    return records;
}

dataset load_impl(const std::string& embeddings_path, const std::string& metadata_path,
                  const vocabulary* fixed_vocab) {
    binary_reader in(embeddings_path);
    in.expect_magic(embeddings_magic);
    const std::uint32_t count = in.u32();
    const std::uint32_t dim = in.u32();
    if (dim == 0) throw io_error(embeddings_path + ": zero dimension");

    const auto records = read_metadata_file(metadata_path);
    if (records.size() != count)
        throw io_error("count mismatch: " + std::to_string(count) + " embedding rows vs " +
                       std::to_string(records.size()) + " metadata records");

    dataset ds;
    ds.dim = dim;
    if (fixed_vocab) ds.vocab = *fixed_vocab;
    ds.packages.reserve(count);
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(count);

    std::vector<float> row(dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        in.f32_array(row);
        for (float x : row)
            if (!std::isfinite(x))
                throw io_error(embeddings_path + ": non-finite value in row " + std::to_string(i));
        // Keep rows already inside the unit-norm band bit-exact; round-trips
        // must reproduce stored embeddings exactly.
        const double n = l2_norm(row);
        if (n == 0.0) throw error("degenerate embedding in row " + std::to_string(i));
        package p;
        p.id = records[i].package_id;
        if (!seen.insert(p.id).second)
            throw io_error("duplicate package_id " + std::to_string(p.id));
        p.image = row;
        if (std::abs(n - 1.0) > unit_norm_tolerance) normalize_in_place(p.image);
        p.metadata_id = fixed_vocab ? fixed_vocab->id_of(records[i].value)
                                    : ds.vocab.intern(records[i].value);
        ds.packages.push_back(std::move(p));
    }
    return ds;
}

} // namespace

dataset load_dataset(const std::string& embeddings_path, const std::string& metadata_path) {
    return load_impl(embeddings_path, metadata_path, nullptr);
}

dataset load_dataset_with_vocab(const std::string& embeddings_path,
                                const std::string& metadata_path, const vocabulary& vocab) {
    return load_impl(embeddings_path, metadata_path, &vocab);
}

void save_dataset(const dataset& ds, const std::string& embeddings_path,
                  const std::string& metadata_path) {
    binary_writer out(embeddings_path);
    out.magic(embeddings_magic);
    out.u32(static_cast<std::uint32_t>(ds.packages.size()));
    out.u32(ds.dim);
    for (const auto& p : ds.packages) out.f32_array(p.image);
    out.finish();

    std::ofstream meta(metadata_path);
    if (!meta) throw io_error("cannot open for writing: " + metadata_path);
    for (const auto& p : ds.packages)
        meta << p.id << '\t' << ds.vocab.value_of(p.metadata_id) << '\n';
    meta.flush();
    if (!meta) throw io_error("write failed: " + metadata_path);
}

split_pair split_stratified(const dataset& ds, double train_fraction, std::uint64_t seed) {
    if (ds.packages.empty()) throw error("cannot split an empty dataset");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw config_error("train_fraction must be in (0, 1)");

    std::vector<std::vector<std::size_t>> strata(ds.vocab.size());
    for (std::size_t i = 0; i < ds.packages.size(); ++i)
        strata[ds.packages[i].metadata_id].push_back(i);

    std::vector<char> to_train(ds.packages.size(), 0);
    rng gen(seed);
    for (auto& stratum : strata) {
        if (stratum.empty()) continue;
        gen.shuffle(stratum);
        const auto n_train = static_cast<std::size_t>(
            std::ceil(train_fraction * static_cast<double>(stratum.size())));
        for (std::size_t j = 0; j < stratum.size(); ++j)
            if (j < n_train) to_train[stratum[j]] = 1;
    }

    split_pair out;
    out.train.vocab = ds.vocab;
    out.test.vocab = ds.vocab;
    out.train.dim = ds.dim;
    out.test.dim = ds.dim;
    for (std::size_t i = 0; i < ds.packages.size(); ++i)
        (to_train[i] ? out.train : out.test).packages.push_back(ds.packages[i]);
    return out;
}

} // namespace aird
