#include "aird/runconfig.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>

namespace aird {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    std::from_chars_result r{};
    if constexpr (std::is_floating_point_v<T>) {
        double d = 0.0;
        r = std::from_chars(first, last, d);
        out = static_cast<T>(d);
    } else {
        r = std::from_chars(first, last, out);
    }
    if (r.ec != std::errc{} || r.ptr != last)
        throw config_error("bad value for key '" + key + "': " + value);
    return out;
}

using setter = std::function<void(run_config&, const std::string& key, const std::string& value)>;

template <typename T, typename Member>
setter num(Member member) {
    return [member](run_config& cfg, const std::string& key, const std::string& value) {
        cfg.*member = parse_number<T>(key, value);
    };
}

const std::map<std::string, setter>& registry() {
    static const std::map<std::string, setter> table = [] {
        std::map<std::string, setter> t;
        t["seed"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.seed = parse_number<std::uint64_t>(k, v);
        };
        t["k"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.k = parse_number<std::uint32_t>(k, v);
        };
        t["train_fraction"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train_fraction = parse_number<double>(k, v);
        };

        t["synth.dim"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.synth.dim = parse_number<std::uint32_t>(k, v);
        };
        t["synth.families"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.synth.families = parse_number<std::uint32_t>(k, v);
        };
        t["synth.entities_per_family"] = [](run_config& c, const std::string& k,
                                            const std::string& v) {
            c.synth.entities_per_family = parse_number<std::uint32_t>(k, v);
        };
        t["synth.min_images"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.synth.min_images = parse_number<std::uint32_t>(k, v);
        };
        t["synth.max_images"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.synth.max_images = parse_number<std::uint32_t>(k, v);
        };
        t["synth.power_exponent"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.synth.power_exponent = parse_number<double>(k, v);
        };
        t["synth.family_angle_deg"] = [](run_config& c, const std::string& k,
                                         const std::string& v) {
            c.synth.family_angle_deg = parse_number<double>(k, v);
        };
        t["synth.noise_sigma"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.synth.noise_sigma = parse_number<double>(k, v);
        };

        t["index.nlist"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.index_params.nlist = parse_number<std::uint32_t>(k, v);
        };
        t["index.m_sub"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.index_params.m_sub = parse_number<std::uint32_t>(k, v);
        };
        t["index.bits"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.index_params.bits = parse_number<std::uint32_t>(k, v);
        };
        t["index.kmeans_iters"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.index_params.kmeans_iters = parse_number<std::uint32_t>(k, v);
        };
        t["search.nprobe"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.retrieval.nprobe = parse_number<std::uint32_t>(k, v);
        };
        t["search.shortlist"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.retrieval.shortlist = parse_number<std::uint32_t>(k, v);
        };

        t["train.tau"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.tau = parse_number<double>(k, v);
        };
        t["train.epochs"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.epochs = parse_number<std::uint32_t>(k, v);
        };
        t["train.batch_size"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.batch_size = parse_number<std::uint32_t>(k, v);
        };
        t["train.lr_cv"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.lr_cv = parse_number<float>(k, v);
        };
        t["train.lr_mg"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.lr_mg = parse_number<float>(k, v);
        };
        t["train.lr_encoder"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.lr_encoder = parse_number<float>(k, v);
        };
        t["train.mg_ratio"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.mg_ratio = parse_number<std::uint32_t>(k, v);
        };
        t["train.val_fraction"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.val_fraction = parse_number<double>(k, v);
        };
        t["train.patience"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.patience = parse_number<std::uint32_t>(k, v);
        };
        t["train.mode"] = [](run_config& c, const std::string& k, const std::string& v) {
            if (v == "adversarial") c.train.mode = train_mode::adversarial;
            else if (v == "nad") c.train.mode = train_mode::nad;
            else throw config_error("bad value for key '" + k + "': " + v +
                                    " (expected adversarial|nad)");
        };
        t["train.mg_loss"] = [](run_config& c, const std::string& k, const std::string& v) {
            if (v == "nonsaturating") c.train.mg_loss = mg_loss_variant::nonsaturating;
            else if (v == "saturating") c.train.mg_loss = mg_loss_variant::saturating;
            else throw config_error("bad value for key '" + k + "': " + v +
                                    " (expected nonsaturating|saturating)");
        };

        t["model.d_m"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.d_m = parse_number<std::uint32_t>(k, v);
        };
        t["model.cssn_hidden1"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.mg_widths.cssn_hidden1 = parse_number<std::uint32_t>(k, v);
        };
        t["model.cssn_hidden2"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.mg_widths.cssn_hidden2 = parse_number<std::uint32_t>(k, v);
        };
        t["model.agg_hidden"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.cv_widths.agg_hidden = parse_number<std::uint32_t>(k, v);
        };
        t["model.agg_out"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.cv_widths.agg_out = parse_number<std::uint32_t>(k, v);
        };
        t["model.fuse_width"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.train.cv_widths.fuse_width = parse_number<std::uint32_t>(k, v);
        };

        t["mp.hidden1"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.mp.hidden1 = parse_number<std::uint32_t>(k, v);
        };
        t["mp.hidden2"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.mp.hidden2 = parse_number<std::uint32_t>(k, v);
        };
        t["mp.epochs"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.mp.epochs = parse_number<std::uint32_t>(k, v);
        };
        t["mp.batch_size"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.mp.batch_size = parse_number<std::uint32_t>(k, v);
        };
        t["mp.lr"] = [](run_config& c, const std::string& k, const std::string& v) {
            c.mp.lr = parse_number<float>(k, v);
        };
        return t;
    }();
    return table;
}

} // namespace

void apply_config_entry(run_config& cfg, const std::string& key, const std::string& value) {
    const auto& table = registry();
    auto it = table.find(key);
    if (it == table.end()) throw config_error("unknown config key '" + key + "'");
    it->second(cfg, key, value);
}

void load_config_file(run_config& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto text = trim(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos)
            throw config_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        apply_config_entry(cfg, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
    }
}

void run_config::finalize() {
    synth.seed = seed;
    index_params.seed = seed;
    train.seed = seed;
    train.k = k;
    train.retrieval = retrieval;
    mp.seed = seed;
}

void validate(const run_config& cfg) {
    if (cfg.k == 0) throw config_error("k must be >= 1");
    if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
        throw config_error("train_fraction must be in (0, 1)");
    if (!(cfg.train.tau > 0.0 && cfg.train.tau <= 1.0))
        throw config_error("train.tau must be in (0, 1]");
    if (cfg.train.batch_size == 0) throw config_error("train.batch_size must be >= 1");
    if (!(cfg.train.val_fraction > 0.0 && cfg.train.val_fraction < 1.0))
        throw config_error("train.val_fraction must be in (0, 1)");
    if (cfg.index_params.m_sub == 0) throw config_error("index.m_sub must be >= 1");
    if (cfg.index_params.bits == 0 || cfg.index_params.bits > 8)
        throw config_error("index.bits must be in [1, 8]");
    if (cfg.index_params.kmeans_iters == 0) throw config_error("index.kmeans_iters must be >= 1");
    if (cfg.synth.dim % cfg.index_params.m_sub != 0)
        throw config_error("synth.dim must be divisible by index.m_sub");
    if (cfg.retrieval.nprobe == 0) throw config_error("search.nprobe must be >= 1");
    if (cfg.train.d_m == 0) throw config_error("model.d_m must be >= 1");
    if (cfg.mp.epochs == 0 || cfg.mp.batch_size == 0)
        throw config_error("mp.epochs and mp.batch_size must be >= 1");
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, v] : registry()) keys.push_back(k);
    return keys;
}

} // namespace aird
