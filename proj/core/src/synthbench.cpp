#include "aird/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "aird/rng.hpp"

namespace aird {

namespace {

constexpr double pi = 3.14159265358979323846;

std::vector<float> random_unit(std::uint32_t dim, rng& gen) {
    for (int attempt = 0; attempt < 16; ++attempt) {
        std::vector<float> v(dim);
        for (auto& x : v) x = static_cast<float>(gen.normal());
        const double n = l2_norm(v);
        if (n > 1e-9) {
            for (auto& x : v) x = static_cast<float>(x / n);
            return v;
        }
    }
    throw error("synthbench: failed to draw a unit vector");
}

// Unit direction orthogonal to `axis`.
std::vector<float> random_orthogonal(std::span<const float> axis, rng& gen) {
    for (int attempt = 0; attempt < 16; ++attempt) {
        std::vector<float> v(axis.size());
        for (auto& x : v) x = static_cast<float>(gen.normal());
        const double proj = dot(v, axis);
        for (std::size_t d = 0; d < v.size(); ++d)
            v[d] = static_cast<float>(v[d] - proj * axis[d]);
        const double n = l2_norm(v);
        if (n > 1e-9) {
            for (auto& x : v) x = static_cast<float>(x / n);
            return v;
        }
    }
    throw error("synthbench: failed to draw an orthogonal direction");
}

// Truncated power-law sample over [lo, hi] with density ~ x^-alpha.
double power_law(double lo, double hi, double alpha, rng& gen) {
    if (lo == hi) return lo;
    const double e = 1.0 - alpha;
    if (std::abs(e) < 1e-12) {
        // alpha == 1 degenerates to a log-uniform draw.
        return lo * std::exp(gen.uniform() * std::log(hi / lo));
    }
    const double a = std::pow(lo, e);
    const double b = std::pow(hi, e);
    return std::pow(a + gen.uniform() * (b - a), 1.0 / e);
}

} // namespace

dataset generate(const bench_config& cfg) {
    if (cfg.dim < 2) throw config_error("synthbench: dim must be >= 2");
    if (static_cast<std::uint64_t>(cfg.families) * cfg.entities_per_family < 2)
        throw config_error("synthbench: need at least 2 entities");
    if (cfg.min_images == 0 || cfg.min_images > cfg.max_images)
        throw config_error("synthbench: bad image count bounds");
    if (!(cfg.family_angle_deg > 0.0)) throw config_error("synthbench: family angle must be > 0");
    if (!(cfg.noise_sigma > 0.0)) throw config_error("synthbench: noise sigma must be > 0");

    rng gen(cfg.seed);
    const double theta = cfg.family_angle_deg * pi / 180.0;

    dataset ds;
    ds.dim = cfg.dim;
    std::uint64_t next_id = 0;
    char name[64];
    for (std::uint32_t f = 0; f < cfg.families; ++f) {
        const auto anchor = random_unit(cfg.dim, gen);
        for (std::uint32_t e = 0; e < cfg.entities_per_family; ++e) {
            const auto tilt = random_orthogonal(anchor, gen);
            std::vector<float> prototype(cfg.dim);
            for (std::uint32_t d = 0; d < cfg.dim; ++d)
                prototype[d] = static_cast<float>(std::cos(theta) * anchor[d] +
                                                  std::sin(theta) * tilt[d]);

            std::snprintf(name, sizeof(name), "fam%04u_ent%02u", f, e);
            const auto meta = ds.vocab.intern(name);

            const auto count = static_cast<std::uint32_t>(std::clamp(
                std::floor(power_law(cfg.min_images, cfg.max_images, cfg.power_exponent, gen)),
                static_cast<double>(cfg.min_images), static_cast<double>(cfg.max_images)));
            for (std::uint32_t img = 0; img < count; ++img) {
                package p;
                p.id = next_id++;
                p.metadata_id = meta;
                bool ok = false;
                for (int attempt = 0; attempt < 16 && !ok; ++attempt) {
                    p.image.assign(cfg.dim, 0.0f);
                    for (std::uint32_t d = 0; d < cfg.dim; ++d)
                        p.image[d] = static_cast<float>(prototype[d] +
                                                        cfg.noise_sigma * gen.normal());
                    if (l2_norm(p.image) > 1e-9) {
                        normalize_in_place(p.image);
                        ok = true;
                    }
                }
                if (!ok) throw error("synthbench: degenerate sample regeneration exhausted");
                ds.packages.push_back(std::move(p));
            }
        }
    }
    return ds;
}

std::vector<confusability_stat> confusability_report(const dataset& ds) {
    const std::uint32_t vocab = ds.vocab.size();
    if (vocab < 2) return {};

    std::vector<confusability_stat> stats(vocab);
    for (std::uint32_t m = 0; m < vocab; ++m) stats[m].metadata_id = m;

    for (std::size_t i = 0; i < ds.packages.size(); ++i) {
        const auto& a = ds.packages[i];
        for (std::size_t j = i + 1; j < ds.packages.size(); ++j) {
            const auto& b = ds.packages[j];
            if (a.metadata_id == b.metadata_id) continue;
            const double c = cosine(a.image, b.image);
            stats[a.metadata_id].max_cross_entity_cosine =
                std::max(stats[a.metadata_id].max_cross_entity_cosine, c);
            stats[b.metadata_id].max_cross_entity_cosine =
                std::max(stats[b.metadata_id].max_cross_entity_cosine, c);
        }
    }
    return stats;
}

} // namespace aird
