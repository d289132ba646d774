// Command-line driver: synth -> index -> train -> eval, each stage
// reproducible from a seed and a key=value configuration.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "aird/checkpoint.hpp"
#include "aird/evaluation.hpp"
#include "aird/runconfig.hpp"
#include "aird/synthbench.hpp"
#include "aird/training.hpp"

namespace {

struct common_options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::vector<std::string> overrides;
};

aird::run_config build_config(const common_options& opts) {
    aird::run_config cfg;
    if (!opts.config_path.empty()) aird::load_config_file(cfg, opts.config_path);
    for (const auto& kv : opts.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw aird::config_error("--set expects key=value, got '" + kv + "'");
        aird::apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (opts.seed) cfg.seed = *opts.seed;
    aird::validate(cfg);
    cfg.finalize();
    return cfg;
}

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

// Inputs are validated before any work starts; a missing path is a usage
// error (exit 2), not a runtime failure.
void require_file(const std::string& path, const char* what) {
    if (!std::filesystem::is_regular_file(path))
        throw aird::config_error(std::string(what) + " not found: " + path);
}

void add_common(CLI::App* cmd, common_options& opts) {
    cmd->add_option("--config", opts.config_path, "key = value configuration file");
    cmd->add_option("--seed", opts.seed, "master seed (overrides config)");
    cmd->add_option("--out", opts.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--set", opts.overrides, "override one config key, as key=value")
        ->take_all();
}

int cmd_synth(const common_options& opts) {
    const auto cfg = build_config(opts);
    std::filesystem::create_directories(opts.out_dir);

    const auto ds = aird::generate(cfg.synth);
    const auto split = aird::split_stratified(ds, cfg.train_fraction, cfg.seed);

    aird::save_dataset(ds, join(opts.out_dir, "full.emb.bin"), join(opts.out_dir, "full.meta.tsv"));
    aird::save_dataset(split.train, join(opts.out_dir, "train.emb.bin"),
                       join(opts.out_dir, "train.meta.tsv"));
    aird::save_dataset(split.test, join(opts.out_dir, "test.emb.bin"),
                       join(opts.out_dir, "test.meta.tsv"));

    std::printf("synth: %zu packages, %u entities, dim %u -> train %zu / test %zu\n",
                ds.packages.size(), ds.vocab.size(), ds.dim, split.train.packages.size(),
                split.test.packages.size());
    return 0;
}

int cmd_index(const common_options& opts, const std::string& embeddings,
              const std::string& metadata, std::string output) {
    const auto cfg = build_config(opts);
    require_file(embeddings, "embeddings file");
    require_file(metadata, "metadata file");
    std::filesystem::create_directories(opts.out_dir);
    if (output.empty()) output = join(opts.out_dir, "index.bin");

    const auto ds = aird::load_dataset(embeddings, metadata);
    const auto idx = aird::build_index(ds, cfg.index_params);
    aird::save_index(idx, output);

    const auto quality = aird::retrieval_quality(idx, ds, cfg.k, /*exclude_self=*/true,
                                                 cfg.retrieval);
    std::printf("index: %zu vectors, dim %u, nlist %u, m_sub %u, bits %u -> %s\n", idx.size(),
                idx.dim, idx.nlist, idx.m_sub, idx.bits, output.c_str());
    std::printf("self-retrieval MAP@%u = %.12f\n", cfg.k, quality.map);
    std::printf("self-retrieval Precision@%u = %.12f\n", cfg.k, quality.precision);
    return 0;
}

int cmd_train(const common_options& opts, const std::string& embeddings,
              const std::string& metadata, const std::string& index_path) {
    const auto cfg = build_config(opts);
    require_file(embeddings, "embeddings file");
    require_file(metadata, "metadata file");
    require_file(index_path, "index file");
    std::filesystem::create_directories(opts.out_dir);

    const auto train_ds = aird::load_dataset(embeddings, metadata);
    const auto idx = aird::load_index(index_path);
    const auto result = aird::train(cfg.train, train_ds, idx);

    aird::save_cv_checkpoint(join(opts.out_dir, "cv.ckpt"), result.cv, result.encoder);
    if (result.mg)
        aird::save_mg_checkpoint(join(opts.out_dir, "mg.ckpt"), *result.mg, result.encoder);
    aird::save_history(result.history, join(opts.out_dir, "history.tsv"));

    const double final_auc = result.history.empty() ? 0.0 : result.history.back().val_auc;
    std::printf("train: %zu epochs run, final val AUC %.4f, mode %s\n", result.history.size(),
                final_auc, cfg.train.mode == aird::train_mode::nad ? "nad" : "adversarial");
    return 0;
}

struct eval_inputs {
    std::string test_embeddings;
    std::string test_metadata;
    std::string train_embeddings;
    std::string train_metadata;
    std::string index_path;
    std::string cv_path;
    std::string nad_path;
};

void write_scores(const std::string& path, const aird::dataset& ds, const aird::eval_set& set,
                  const aird::score_fn& fn) {
    std::ofstream out(path);
    if (!out) throw aird::io_error("cannot open for writing: " + path);
    char buf[96];
    for (const auto& inst : set.instances) {
        const auto s = fn(ds, inst);
        std::snprintf(buf, sizeof(buf), "%llu\t%.9g\t%s\n",
                      static_cast<unsigned long long>(inst.package_id), s.score,
                      s.unverifiable ? "unverifiable" : "ok");
        out << buf;
    }
}

int cmd_eval(const common_options& opts, const eval_inputs& in) {
    const auto cfg = build_config(opts);
    require_file(in.test_embeddings, "test embeddings file");
    require_file(in.test_metadata, "test metadata file");
    require_file(in.train_embeddings, "train embeddings file");
    require_file(in.train_metadata, "train metadata file");
    require_file(in.index_path, "index file");
    require_file(in.cv_path, "detector checkpoint");
    if (!in.nad_path.empty()) require_file(in.nad_path, "NAD checkpoint");
    std::filesystem::create_directories(opts.out_dir);

    const auto train_ds = aird::load_dataset(in.train_embeddings, in.train_metadata);
    const auto test_ds =
        aird::load_dataset_with_vocab(in.test_embeddings, in.test_metadata, train_ds.vocab);
    const auto idx = aird::load_index(in.index_path);

    auto cv_ck = aird::load_cv_checkpoint(in.cv_path);
    std::optional<aird::cv_checkpoint> nad_ck;
    if (!in.nad_path.empty()) nad_ck = aird::load_cv_checkpoint(in.nad_path);

    const auto mp = aird::train_mp(train_ds.packages, train_ds.dim, train_ds.vocab.size(), cfg.mp);

    const auto test_set = aird::build_eval_set(test_ds, idx, cfg.seed, cfg.retrieval);
    const auto train_set = aird::build_eval_set(train_ds, idx, cfg.seed + 1, cfg.retrieval);

    const auto params = cfg.retrieval;
    const auto K = cfg.k;

    auto verifier_fn = [&idx, params](const aird::cv_checkpoint& ck) {
        return [&idx, params, &ck](const aird::dataset& ds, const aird::eval_instance& inst) {
            const auto& pkg = ds.packages[inst.package_index];
            const auto out = aird::verify_package(ck.cv, ck.encoder, idx, pkg.image,
                                                  inst.claimed_metadata_id, pkg.id, params);
            return aird::scored{out.score, out.unverifiable};
        };
    };

    std::vector<aird::scorer> scorers;
    scorers.push_back({"B1",
                       [&](const aird::dataset& ds, const aird::eval_instance& inst) {
                           const auto& pkg = ds.packages[inst.package_index];
                           return aird::baseline_b1(idx, pkg.image, pkg.id,
                                                    inst.claimed_metadata_id, K, params);
                       },
                       true});
    scorers.push_back({"B2",
                       [&](const aird::dataset& ds, const aird::eval_instance& inst) {
                           const auto& pkg = ds.packages[inst.package_index];
                           return aird::baseline_b2(idx, pkg.image, inst.claimed_metadata_id, K,
                                                    params);
                       },
                       true});
    scorers.push_back({"B3",
                       [&](const aird::dataset& ds, const aird::eval_instance& inst) {
                           const auto& pkg = ds.packages[inst.package_index];
                           return aird::baseline_b3(idx, pkg.image, pkg.id,
                                                    inst.claimed_metadata_id, K, params);
                       },
                       true});
    scorers.push_back({"B4",
                       [&](const aird::dataset& ds, const aird::eval_instance& inst) {
                           const auto& pkg = ds.packages[inst.package_index];
                           return aird::baseline_b4(idx, pkg.image, pkg.id,
                                                    inst.claimed_metadata_id, K, params);
                       },
                       true});
    scorers.push_back({"MP",
                       [&](const aird::dataset& ds, const aird::eval_instance& inst) {
                           const auto& pkg = ds.packages[inst.package_index];
                           return aird::scored{
                               aird::mp_score(mp, pkg.image, inst.claimed_metadata_id), false};
                       },
                       false});
    if (nad_ck) scorers.push_back({"NAD", verifier_fn(*nad_ck), false});
    scorers.push_back({"AIRD", verifier_fn(cv_ck), false});

    auto report = aird::evaluate(scorers, test_set, test_ds, &train_set, &train_ds);
    report.k = K;
    const auto quality = aird::retrieval_quality(idx, test_ds, K, /*exclude_self=*/false, params);
    report.map_at_k = quality.map;
    report.precision_at_k = quality.precision;

    {
        std::ofstream json_out(join(opts.out_dir, "report.json"));
        json_out << aird::report_to_json(report);
        std::ofstream table_out(join(opts.out_dir, "report.txt"));
        table_out << aird::report_to_table(report);
    }
    for (const auto& s : scorers)
        write_scores(join(opts.out_dir, "scores_" + s.name + ".tsv"), test_ds, test_set, s.fn);

    std::fputs(aird::report_to_table(report).c_str(), stdout);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarial image-repurposing detection pipeline"};
    app.require_subcommand(1);

    common_options synth_opts, index_opts, train_opts, eval_opts;

    auto* synth = app.add_subcommand("synth", "generate the synthetic benchmark and its splits");
    add_common(synth, synth_opts);

    auto* index = app.add_subcommand("index", "build the reference index over a dataset");
    add_common(index, index_opts);
    std::string idx_embeddings, idx_metadata, idx_output;
    index->add_option("--embeddings", idx_embeddings, "embeddings file")->required();
    index->add_option("--metadata", idx_metadata, "metadata file")->required();
    index->add_option("--output", idx_output, "index output path (default <out>/index.bin)");

    auto* train = app.add_subcommand("train", "adversarially train the detector");
    add_common(train, train_opts);
    std::string tr_embeddings, tr_metadata, tr_index;
    train->add_option("--embeddings", tr_embeddings, "train-split embeddings")->required();
    train->add_option("--metadata", tr_metadata, "train-split metadata")->required();
    train->add_option("--index", tr_index, "reference index file")->required();

    auto* eval = app.add_subcommand("eval", "evaluate detector, ablation and baselines");
    add_common(eval, eval_opts);
    eval_inputs ev;
    eval->add_option("--test-embeddings", ev.test_embeddings, "test-split embeddings")->required();
    eval->add_option("--test-metadata", ev.test_metadata, "test-split metadata")->required();
    eval->add_option("--train-embeddings", ev.train_embeddings,
                     "train-split embeddings (vocabulary authority, MP training, threshold tuning)")
        ->required();
    eval->add_option("--train-metadata", ev.train_metadata, "train-split metadata")->required();
    eval->add_option("--index", ev.index_path, "reference index file")->required();
    eval->add_option("--cv", ev.cv_path, "detector checkpoint")->required();
    eval->add_option("--nad-cv", ev.nad_path, "non-adversarial detector checkpoint (optional)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_opts);
        if (index->parsed()) return cmd_index(index_opts, idx_embeddings, idx_metadata, idx_output);
        if (train->parsed()) return cmd_train(train_opts, tr_embeddings, tr_metadata, tr_index);
        if (eval->parsed()) return cmd_eval(eval_opts, ev);
    } catch (const aird::config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
