#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aird/counterfeiter.hpp"
#include "aird/detector.hpp"

namespace aird {

// Optimizer snapshot stored alongside a checkpoint: adaptive moments per
// parameter tensor in collect_parameters order, plus the lazily updated
// per-row state of the metadata encoder.
struct optimizer_snapshot {
    std::uint64_t step = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
    std::vector<std::uint64_t> row_step;
    std::vector<float> row_m;
    std::vector<float> row_v;
};

void save_mg_checkpoint(const std::string& path, const mg_model& mg, const metadata_encoder& enc,
                        const optimizer_snapshot* opt = nullptr);
void save_cv_checkpoint(const std::string& path, const cv_model& cv, const metadata_encoder& enc,
                        const optimizer_snapshot* opt = nullptr);

struct mg_checkpoint {
    mg_model mg;
    metadata_encoder encoder;
    std::optional<optimizer_snapshot> optimizer;
};

struct cv_checkpoint {
    cv_model cv;
    metadata_encoder encoder;
    std::optional<optimizer_snapshot> optimizer;
};

mg_checkpoint load_mg_checkpoint(const std::string& path);
cv_checkpoint load_cv_checkpoint(const std::string& path);

} // namespace aird
