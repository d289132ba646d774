#pragma once

#include <string>
#include <vector>

#include "aird/evaluation.hpp"
#include "aird/synthbench.hpp"
#include "aird/training.hpp"
#include "aird/vecindex.hpp"

namespace aird {

// Every tunable of the pipeline, merged from an optional `key = value`
// config file plus command-line overrides. Unknown keys and invalid values
// are rejected before any work starts.
struct run_config {
    std::uint64_t seed = 42;
    std::uint32_t k = 3;

    bench_config synth;
    double train_fraction = 0.8;

    index_build_params index_params;
    search_params retrieval;

    train_config train;
    mp_config mp;

    // Pushes the shared knobs (seed, k) into the per-stage structs.
    void finalize();
};

// Applies one `key = value` assignment; throws config_error naming the key
// when it is unknown or its value does not parse.
void apply_config_entry(run_config& cfg, const std::string& key, const std::string& value);

// Line-based `key = value` file with '#' comments and blank lines.
void load_config_file(run_config& cfg, const std::string& path);

// Validates cross-field constraints; throws config_error.
void validate(const run_config& cfg);

// Known keys, for usage messages.
std::vector<std::string> config_keys();

} // namespace aird
