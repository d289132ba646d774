#pragma once

#include <cstdint>
#include <vector>

#include "aird/core.hpp"

namespace aird {

// Confusable-entity benchmark: families of entities whose prototypes sit a
// small angle apart on the unit sphere, so cross-entity images make
// convincing fake candidates. Entity sizes follow a truncated power law.
struct bench_config {
    std::uint32_t dim = 64;
    std::uint32_t families = 50;
    std::uint32_t entities_per_family = 4;
    std::uint32_t min_images = 5;
    std::uint32_t max_images = 60;
    double power_exponent = 1.5;
    // Angle/noise pair calibrated so same-family entities stay confusable
    // (median nearest-cross-entity cosine above cos(2*theta)) while top-3
    // retrieval stays imperfect (MAP@3 around 0.75-0.8).
    double family_angle_deg = 24.0;
    double noise_sigma = 0.105;
    std::uint64_t seed = 0;
};

dataset generate(const bench_config& cfg);

struct confusability_stat {
    std::uint32_t metadata_id = 0;
    double max_cross_entity_cosine = -1.0;
};

// Per entity, the largest cosine between one of its images and any other
// entity's image. Empty when the dataset has a single entity.
std::vector<confusability_stat> confusability_report(const dataset& ds);

} // namespace aird
