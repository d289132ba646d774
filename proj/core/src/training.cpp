#include "aird/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "aird/evaluation.hpp"

namespace aird {

retrieval_cache precompute_retrievals(const index_model& idx, const dataset& ds, std::size_t K,
                                      const search_params& params) {
    retrieval_cache cache;
    cache.entries.resize(ds.packages.size());
    for (std::size_t i = 0; i < ds.packages.size(); ++i) {
        const auto& pkg = ds.packages[i];
        auto& entry = cache.entries[i];
        for (const auto& h : search_excluding_metadata(idx, pkg.image, K, pkg.metadata_id, params))
            entry.fake_candidates.push_back(h.package_id);
        for (const auto& h : search_excluding_package(idx, pkg.image, K, pkg.id, params))
            entry.by_image.push_back(h.package_id);
        entry.hard_negative = hard_negative(idx, pkg, params);
    }
    return cache;
}

std::uint32_t sample_easy_negative(const dataset& ds, const package& pkg, rng& gen) {
    const std::uint32_t vocab = ds.vocab.size();
    if (vocab < 2) throw error("easy negatives need a vocabulary of at least 2");
    const auto draw = static_cast<std::uint32_t>(gen.uniform_index(vocab - 1));
    return draw >= pkg.metadata_id ? draw + 1 : draw;
}

std::uint32_t hard_negative(const index_model& idx, const package& pkg,
                            const search_params& params) {
    const auto hits = search_excluding_metadata(idx, pkg.image, 1, pkg.metadata_id, params);
    return idx.metadata_of(hits.front().package_id);
}

encoder_adam make_encoder_adam(const adam_config& cfg, const metadata_encoder& enc) {
    encoder_adam s;
    s.cfg = cfg;
    s.t.assign(enc.vocab_size, 0);
    s.m.assign(enc.table.size(), 0.0f);
    s.v.assign(enc.table.size(), 0.0f);
    return s;
}

void encoder_adam_step(metadata_encoder& enc,
                       const std::map<std::uint32_t, std::vector<double>>& row_grads,
                       encoder_adam& state) {
    const double b1 = state.cfg.beta1;
    const double b2 = state.cfg.beta2;
    for (const auto& [row, g] : row_grads) {
        if (g.size() != enc.d_m) throw error("encoder_adam_step: row gradient size mismatch");
        auto r = enc.row(row);
        ++state.t[row];
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t[row]));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t[row]));
        float* m = state.m.data() + static_cast<std::size_t>(row) * enc.d_m;
        float* v = state.v.data() + static_cast<std::size_t>(row) * enc.d_m;
        for (std::size_t j = 0; j < enc.d_m; ++j) {
            const double gj = g[j];
            const double mj = b1 * m[j] + (1.0 - b1) * gj;
            const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            r[j] = static_cast<float>(r[j] - state.cfg.lr * (mj / bc1) /
                                                 (std::sqrt(vj / bc2) + state.cfg.eps));
        }
    }
}

namespace {

std::vector<evidence_item> evidence_from_ids(const index_model& idx,
                                             std::span<const std::uint64_t> ids, std::size_t K,
                                             std::span<const float> query) {
    if (ids.empty()) throw error("empty cached evidence");
    std::vector<evidence_item> out;
    out.reserve(K);
    for (std::size_t i = 0; i < K; ++i) {
        const std::uint64_t id = ids[i % ids.size()];
        evidence_item e;
        e.package_id = id;
        e.metadata_id = idx.metadata_of(id);
        const auto v = idx.vector_of(id);
        e.image.assign(v.begin(), v.end());
        e.similarity = cosine(query, v);
        out.push_back(std::move(e));
    }
    return out;
}

candidate_set candidates_from_ids(const index_model& idx, const metadata_encoder& enc,
                                  std::span<const std::uint64_t> ids, std::size_t K,
                                  std::span<const float> query) {
    if (ids.empty()) throw error("empty cached candidates");
    candidate_set out;
    out.items.reserve(K);
    for (std::size_t i = 0; i < K; ++i) {
        const std::uint64_t id = ids[i % ids.size()];
        candidate c;
        c.package_id = id;
        c.metadata_id = idx.metadata_of(id);
        const auto v = idx.vector_of(id);
        c.image.assign(v.begin(), v.end());
        c.metadata = encode_metadata(enc, c.metadata_id);
        c.similarity = cosine(query, v);
        out.items.push_back(std::move(c));
    }
    return out;
}

void add_rows(std::map<std::uint32_t, std::vector<double>>& acc, std::uint32_t row,
              std::span<const double> g) {
    auto& dst = acc.try_emplace(row, g.size(), 0.0).first->second;
    for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
}

} // namespace

trainer make_trainer(const train_config& cfg, const dataset& train_ds, const index_model& idx) {
    if (cfg.k == 0) throw config_error("train: K must be >= 1");
    if (cfg.batch_size == 0) throw config_error("train: batch size must be >= 1");
    if (!(cfg.tau > 0.0 && cfg.tau <= 1.0)) throw config_error("train: tau must be in (0, 1]");
    if (train_ds.packages.empty()) throw error("train: empty training split");

    trainer t;
    t.cfg = cfg;
    t.ds = &train_ds;
    t.idx = &idx;
    t.gen = rng(cfg.seed);

    auto enc_rng = t.gen.fork(1);
    t.encoder = make_metadata_encoder(train_ds.vocab.size(), cfg.d_m, enc_rng);
    if (cfg.mode == train_mode::adversarial) {
        auto mg_rng = t.gen.fork(2);
        t.mg = make_mg(train_ds.dim, cfg.d_m, cfg.mg_widths, mg_rng);
    }
    auto cv_rng = t.gen.fork(3);
    t.cv = make_cv(train_ds.dim, cfg.d_m, cfg.k, cfg.cv_widths, cv_rng);

    t.cv_opt = make_adam({cfg.lr_cv}, collect_parameters(t.cv));
    if (t.mg) t.mg_opt = make_adam({cfg.lr_mg}, collect_parameters(*t.mg));
    t.enc_opt = make_encoder_adam({cfg.lr_encoder}, t.encoder);

    t.cache = precompute_retrievals(idx, train_ds, cfg.k, cfg.retrieval);
    return t;
}

cv_loss_components cv_step(trainer& t, std::span<const std::size_t> batch) {
    if (batch.empty()) return {};
    const auto K = t.cfg.k;
    const bool nad = t.cfg.mode == train_mode::nad;

    cv_grads grads = make_cv_grads(t.cv);
    std::map<std::uint32_t, std::vector<double>> row_grads;
    cv_loss_components losses;

    struct term {
        std::vector<double> m_hat;
        std::uint32_t claimed = 0;
        int target = 0;
        double* bucket = nullptr;
    };

    for (const std::size_t i : batch) {
        const auto& pkg = t.ds->packages[i];
        const auto& ce = t.cache.entries[i];
        evidence_set ev;
        ev.by_image = evidence_from_ids(*t.idx, ce.by_image, K, pkg.image);

        std::vector<term> terms;
        terms.push_back({to_m_hat(t.encoder.row(pkg.metadata_id)), pkg.metadata_id, 1,
                         &losses.real});
        if (!nad) {
            auto candidates = candidates_from_ids(*t.idx, t.encoder, ce.fake_candidates, K, pkg.image);
            const auto fab = fabricate(*t.mg, candidates, pkg.image,
                                       t.encoder.row(pkg.metadata_id), t.cfg.tau);
            const auto claimed = candidates.items[fab.choice.argmax()].metadata_id;
            terms.push_back({fab.metadata, claimed, 0, &losses.generated});
        }
        terms.push_back({to_m_hat(t.encoder.row(ce.hard_negative)), ce.hard_negative, 0,
                         &losses.hard});
        const auto m_r = sample_easy_negative(*t.ds, pkg, t.gen);
        terms.push_back({to_m_hat(t.encoder.row(m_r)), m_r, 0, &losses.easy});

        for (const auto& tm : terms) {
            ev.by_metadata = evidence_from_ids(
                *t.idx,
                [&] {
                    std::vector<std::uint64_t> ids;
                    for (const auto& h :
                         lookup_by_metadata(*t.idx, tm.claimed, K, pkg.image, pkg.id))
                        ids.push_back(h.package_id);
                    return ids;
                }(),
                K, pkg.image);

            cv_tape tape;
            const double y = cv_forward(t.cv, t.encoder, ev, pkg.image, tm.m_hat, tape);
            const auto bce = bce_terms(y, tm.target);
            *tm.bucket += bce.loss;

            cv_input_grads igrads;
            cv_backward(t.cv, tape, bce.dloss_dp, &grads, nad ? &igrads : nullptr);
            if (nad) {
                // The encoder trains through the CV loss in this mode: the
                // claimed-metadata input and every evidence row contribute.
                add_rows(row_grads, tm.claimed, igrads.d_m_hat);
                for (std::size_t k = 0; k < K; ++k) {
                    add_rows(row_grads, ev.by_image[k].metadata_id, igrads.d_meta_by_image[k]);
                    add_rows(row_grads, ev.by_metadata[k].metadata_id, igrads.d_meta_by_metadata[k]);
                }
            }
        }
    }

    const double scale = 1.0 / static_cast<double>(batch.size());
    grads.scale(scale);
    adam_step(collect_parameters(t.cv), collect_gradients(grads), t.cv_opt);
    if (nad && !row_grads.empty()) {
        for (auto& [row, g] : row_grads)
            for (double& x : g) x *= scale;
        encoder_adam_step(t.encoder, row_grads, t.enc_opt);
    }

    const double inv = 1.0 / static_cast<double>(batch.size());
    losses.real *= inv;
    losses.generated *= inv;
    losses.hard *= inv;
    losses.easy *= inv;
    return losses;
}

double mg_step(trainer& t, std::span<const std::size_t> batch) {
    if (!t.mg) throw error("mg_step: no counterfeiter in nad mode");
    if (batch.empty()) return 0.0;
    const auto K = t.cfg.k;

    fabrication_grads fg = make_fabrication_grads(*t.mg, K);
    std::map<std::uint32_t, std::vector<double>> row_grads;
    double loss = 0.0;

    for (const std::size_t i : batch) {
        const auto& pkg = t.ds->packages[i];
        const auto& ce = t.cache.entries[i];

        auto candidates = candidates_from_ids(*t.idx, t.encoder, ce.fake_candidates, K, pkg.image);
        const auto m_emb = encode_metadata(t.encoder, pkg.metadata_id);
        const auto fab = fabricate(*t.mg, candidates, pkg.image, m_emb, t.cfg.tau);
        const auto claimed = candidates.items[fab.choice.argmax()].metadata_id;

        evidence_set ev;
        ev.by_image = evidence_from_ids(*t.idx, ce.by_image, K, pkg.image);
        std::vector<std::uint64_t> meta_ids;
        for (const auto& h : lookup_by_metadata(*t.idx, claimed, K, pkg.image, pkg.id))
            meta_ids.push_back(h.package_id);
        ev.by_metadata = evidence_from_ids(*t.idx, meta_ids, K, pkg.image);

        cv_tape tape;
        const double y = cv_forward(t.cv, t.encoder, ev, pkg.image, fab.metadata, tape);
        double dldy = 0.0;
        if (t.cfg.mg_loss == mg_loss_variant::nonsaturating) {
            const auto bce = bce_terms(y, 1); // minimize -log CV(i, m-tilde)
            loss += bce.loss;
            dldy = bce.dloss_dp;
        } else {
            const auto bce = bce_terms(y, 0); // minimize log(1 - CV(i, m-tilde))
            loss += -bce.loss;
            dldy = -bce.dloss_dp;
        }

        // The verifier is frozen; only its input gradient flows back, and of
        // the inputs only the fabricated metadata path reaches the encoder.
        cv_input_grads igrads;
        cv_backward(t.cv, tape, dldy, nullptr, &igrads);

        std::fill(fg.d_query_metadata.begin(), fg.d_query_metadata.end(), 0.0);
        for (auto& dm : fg.d_candidate_metadata) std::fill(dm.begin(), dm.end(), 0.0f);
        fabricate_backward(*t.mg, fab, candidates, pkg.image, m_emb, igrads.d_m_hat, fg);

        add_rows(row_grads, pkg.metadata_id, fg.d_query_metadata);
        for (std::size_t k = 0; k < K; ++k)
            add_rows(row_grads, candidates.items[k].metadata_id, fg.d_candidate_metadata[k]);
    }

    const double scale = 1.0 / static_cast<double>(batch.size());
    fg.cssn.scale(scale);
    adam_step(collect_parameters(*t.mg), collect_gradients(fg.cssn), *t.mg_opt);
    for (auto& [row, g] : row_grads)
        for (double& x : g) x *= scale;
    encoder_adam_step(t.encoder, row_grads, t.enc_opt);

    return loss / static_cast<double>(batch.size());
}

namespace {

// Real versus easy and hard negatives, mirroring the evaluation protocol.
double validation_auc(trainer& t, std::span<const std::size_t> val_indices,
                      std::span<const std::uint32_t> val_negatives) {
    if (val_indices.empty()) return 0.5;
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t vi = 0; vi < val_indices.size(); ++vi) {
        const std::size_t i = val_indices[vi];
        const auto& pkg = t.ds->packages[i];
        const auto& ce = t.cache.entries[i];
        evidence_set ev;
        ev.by_image = evidence_from_ids(*t.idx, ce.by_image, t.cfg.k, pkg.image);
        for (const std::uint32_t claimed :
             {pkg.metadata_id, val_negatives[vi], ce.hard_negative}) {
            std::vector<std::uint64_t> meta_ids;
            for (const auto& h : lookup_by_metadata(*t.idx, claimed, t.cfg.k, pkg.image, pkg.id))
                meta_ids.push_back(h.package_id);
            ev.by_metadata = evidence_from_ids(*t.idx, meta_ids, t.cfg.k, pkg.image);
            const auto m_hat = to_m_hat(t.encoder.row(claimed));
            scores.push_back(verify(t.cv, t.encoder, ev, pkg.image, m_hat));
            labels.push_back(claimed == pkg.metadata_id ? 1 : 0);
        }
    }
    return auc(scores, labels);
}

} // namespace

train_result train(const train_config& cfg, const dataset& train_ds, const index_model& idx) {
    trainer t = make_trainer(cfg, train_ds, idx);

    train_result result;
    if (cfg.epochs == 0) {
        result.mg = std::move(t.mg);
        result.cv = std::move(t.cv);
        result.encoder = std::move(t.encoder);
        return result;
    }

    const std::size_t n = train_ds.packages.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    auto val_rng = t.gen.fork(5);
    val_rng.shuffle(order);
    std::size_t val_count = static_cast<std::size_t>(
        std::llround(cfg.val_fraction * static_cast<double>(n)));
    if (n >= 2) val_count = std::clamp<std::size_t>(val_count, 1, n - 1);
    else val_count = 0;
    std::vector<std::size_t> val_indices(order.begin(), order.begin() + val_count);
    std::vector<std::size_t> fit_indices(order.begin() + val_count, order.end());

    auto neg_rng = t.gen.fork(6);
    std::vector<std::uint32_t> val_negatives;
    val_negatives.reserve(val_indices.size());
    for (const std::size_t i : val_indices)
        val_negatives.push_back(sample_easy_negative(train_ds, train_ds.packages[i], neg_rng));

    double best_auc = -1.0;
    std::uint32_t since_best = 0;
    std::optional<mg_model> best_mg;
    cv_model best_cv;
    metadata_encoder best_enc;

    for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        t.gen.shuffle(fit_indices);
        double cv_sum = 0.0;
        double mg_sum = 0.0;
        std::size_t samples = 0;
        for (std::size_t off = 0; off < fit_indices.size(); off += cfg.batch_size) {
            const std::size_t len = std::min<std::size_t>(cfg.batch_size, fit_indices.size() - off);
            const std::span<const std::size_t> batch(fit_indices.data() + off, len);
            const auto comp = cv_step(t, batch);
            cv_sum += comp.total() * static_cast<double>(len);
            if (cfg.mode == train_mode::adversarial) {
                double mg_loss = 0.0;
                for (std::uint32_t r = 0; r < std::max<std::uint32_t>(1, cfg.mg_ratio); ++r)
                    mg_loss = mg_step(t, batch);
                mg_sum += mg_loss * static_cast<double>(len);
            }
            samples += len;
        }

        epoch_stats stats;
        stats.epoch = epoch;
        stats.cv_loss = samples ? cv_sum / static_cast<double>(samples) : 0.0;
        stats.mg_loss = cfg.mode == train_mode::adversarial
                            ? (samples ? mg_sum / static_cast<double>(samples) : 0.0)
                            : std::numeric_limits<double>::quiet_NaN();
        stats.val_auc = validation_auc(t, val_indices, val_negatives);
        result.history.push_back(stats);

        if (stats.val_auc > best_auc + 1e-12) {
            best_auc = stats.val_auc;
            since_best = 0;
            best_mg = t.mg;
            best_cv = t.cv;
            best_enc = t.encoder;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }

    if (best_auc >= 0.0) {
        result.mg = std::move(best_mg);
        result.cv = std::move(best_cv);
        result.encoder = std::move(best_enc);
    } else {
        result.mg = std::move(t.mg);
        result.cv = std::move(t.cv);
        result.encoder = std::move(t.encoder);
    }
    return result;
}

void save_history(const std::vector<epoch_stats>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    char buf[160];
    for (const auto& e : history) {
        std::snprintf(buf, sizeof(buf), "%u\t%.9g\t%.9g\t%.9g\n", e.epoch, e.cv_loss, e.mg_loss,
                      e.val_auc);
        out << buf;
    }
    out.flush();
    if (!out) throw io_error("write failed: " + path);
}

} // namespace aird
