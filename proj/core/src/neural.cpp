#include "aird/neural.hpp"

#include <algorithm>
#include <cmath>

namespace aird {

namespace {

double apply_activation(activation act, double z) {
    switch (act) {
        case activation::linear: return z;
        case activation::relu: return z > 0.0 ? z : 0.0;
        case activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    }
    throw error("unknown activation");
}

double activation_derivative(activation act, double z) {
    switch (act) {
        case activation::linear: return 1.0;
        case activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case activation::sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-z));
            return s * (1.0 - s);
        }
    }
    throw error("unknown activation");
}

} // namespace

std::size_t dense_net::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.a.size() + l.b.size();
    return n;
}

void net_grads::zero() {
    for (auto& m : dw) std::fill(m.a.begin(), m.a.end(), 0.0);
    for (auto& v : db) std::fill(v.begin(), v.end(), 0.0);
}

void net_grads::scale(double s) {
    for (auto& m : dw)
        for (double& x : m.a) x *= s;
    for (auto& v : db)
        for (double& x : v) x *= s;
}

net_grads make_grads(const dense_net& net) {
    net_grads g;
    for (const auto& l : net.layers) {
        g.dw.emplace_back(l.w.rows, l.w.cols);
        g.db.emplace_back(l.b.size(), 0.0);
    }
    return g;
}

dense_net make_dense_net(std::size_t input, const std::vector<std::size_t>& widths,
                         const std::vector<activation>& acts, rng& gen) {
    if (widths.empty() || widths.size() != acts.size())
        throw error("make_dense_net: widths/activations mismatch");
    dense_net net;
    std::size_t in = input;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        dense_layer l;
        l.w = mat(widths[i], in);
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (float& w : l.w.a) w = static_cast<float>(gen.uniform(-bound, bound));
        l.b.assign(widths[i], 0.0f);
        l.act = acts[i];
        net.layers.push_back(std::move(l));
        in = widths[i];
    }
    return net;
}

std::vector<double> forward(const dense_net& net, std::span<const double> x, forward_tape& tape) {
    if (net.layers.empty()) throw error("forward: empty network");
    if (x.size() != net.input_size()) throw error("forward: input dimension mismatch");

    tape.inputs.assign(net.layers.size(), {});
    tape.preacts.assign(net.layers.size(), {});
    std::vector<double> cur(x.begin(), x.end());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        tape.inputs[i] = cur;
        std::vector<double> z(l.w.rows);
        for (std::size_t r = 0; r < l.w.rows; ++r) {
            double acc = static_cast<double>(l.b[r]);
            const float* wrow = l.w.a.data() + r * l.w.cols;
            for (std::size_t c = 0; c < l.w.cols; ++c)
                acc += static_cast<double>(wrow[c]) * cur[c];
            z[r] = acc;
        }
        tape.preacts[i] = z;
        cur.resize(z.size());
        for (std::size_t r = 0; r < z.size(); ++r) cur[r] = apply_activation(l.act, z[r]);
    }
    tape.output = cur;
    return cur;
}

std::vector<double> forward(const dense_net& net, std::span<const double> x) {
    forward_tape tape;
    return forward(net, x, tape);
}

std::vector<double> backward(const dense_net& net, const forward_tape& tape,
                             std::span<const double> output_grad, net_grads& grads) {
    const std::size_t L = net.layers.size();
    if (tape.inputs.size() != L || tape.preacts.size() != L)
        throw error("backward: stale tape (layer count mismatch)");
    if (grads.dw.size() != L) throw error("backward: gradient shape mismatch");
    if (output_grad.size() != net.output_size()) throw error("backward: output grad size mismatch");

    std::vector<double> dy(output_grad.begin(), output_grad.end());
    for (std::size_t li = L; li-- > 0;) {
        const auto& l = net.layers[li];
        const auto& z = tape.preacts[li];
        const auto& in = tape.inputs[li];
        if (z.size() != l.w.rows || in.size() != l.w.cols)
            throw error("backward: stale tape (dimension mismatch)");

        std::vector<double> dz(z.size());
        for (std::size_t r = 0; r < z.size(); ++r)
            dz[r] = dy[r] * activation_derivative(l.act, z[r]);

        auto& dw = grads.dw[li];
        auto& db = grads.db[li];
        for (std::size_t r = 0; r < l.w.rows; ++r) {
            double* dwrow = dw.a.data() + r * l.w.cols;
            const double g = dz[r];
            for (std::size_t c = 0; c < l.w.cols; ++c) dwrow[c] += g * in[c];
            db[r] += g;
        }

        std::vector<double> dx(l.w.cols, 0.0);
        for (std::size_t r = 0; r < l.w.rows; ++r) {
            const float* wrow = l.w.a.data() + r * l.w.cols;
            const double g = dz[r];
            for (std::size_t c = 0; c < l.w.cols; ++c)
                dx[c] += static_cast<double>(wrow[c]) * g;
        }
        dy = std::move(dx);
    }
    return dy;
}

std::vector<double> softmax_temperature(std::span<const double> scores, double tau) {
    if (!(tau > 0.0 && tau <= 1.0)) throw config_error("softmax temperature must be in (0, 1]");
    if (scores.empty()) throw error("softmax over empty scores");
    for (double s : scores)
        if (!std::isfinite(s)) throw error("softmax over non-finite score");

    const double m = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp((scores[i] - m) / tau);
        total += out[i];
    }
    for (double& c : out) c /= total;
    return out;
}

std::vector<double> softmax_temperature_backward(std::span<const double> weights,
                                                 std::span<const double> dweights, double tau) {
    double inner = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) inner += dweights[k] * weights[k];
    std::vector<double> ds(weights.size());
    for (std::size_t k = 0; k < weights.size(); ++k)
        ds[k] = weights[k] * (dweights[k] - inner) / tau;
    return ds;
}

bce_result bce_terms(double p, int target) {
    const double q = std::clamp(p, probability_clamp, 1.0 - probability_clamp);
    bce_result r;
    if (target == 1) {
        r.loss = -std::log(q);
        r.dloss_dp = -1.0 / q;
    } else {
        r.loss = -std::log(1.0 - q);
        r.dloss_dp = 1.0 / (1.0 - q);
    }
    return r;
}

xent_result softmax_xent(std::span<const double> logits, std::size_t target) {
    if (target >= logits.size()) throw error("softmax_xent: target out of range");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        total += p[i];
    }
    xent_result r;
    r.dlogits.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] /= total;
        r.dlogits[i] = p[i] - (i == target ? 1.0 : 0.0);
    }
    r.loss = -std::log(std::max(p[target], probability_clamp));
    return r;
}

adam_state make_adam(const adam_config& cfg, const std::vector<std::span<float>>& params) {
    adam_state s;
    s.cfg = cfg;
    for (const auto& p : params) {
        s.m.emplace_back(p.size(), 0.0f);
        s.v.emplace_back(p.size(), 0.0f);
    }
    return s;
}

void adam_step(const std::vector<std::span<float>>& params,
               const std::vector<std::span<const double>>& grads, adam_state& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw error("adam_step: tensor list mismatch");
    ++state.step;
    const double b1 = state.cfg.beta1;
    const double b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].size() != grads[t].size() || params[t].size() != state.m[t].size())
            throw error("adam_step: shape mismatch");
        float* p = params[t].data();
        const double* g = grads[t].data();
        float* m = state.m[t].data();
        float* v = state.v[t].data();
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            const double gi = g[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p[i] = static_cast<float>(p[i] - state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps));
        }
    }
}

std::vector<std::span<float>> collect_parameters(dense_net& net) {
    std::vector<std::span<float>> out;
    for (auto& l : net.layers) {
        out.emplace_back(l.w.a);
        out.emplace_back(l.b);
    }
    return out;
}

std::vector<std::span<const double>> collect_gradients(const net_grads& grads) {
    std::vector<std::span<const double>> out;
    for (std::size_t i = 0; i < grads.dw.size(); ++i) {
        out.emplace_back(grads.dw[i].a);
        out.emplace_back(grads.db[i]);
    }
    return out;
}

grad_check_report check_gradients_fd(const std::vector<std::span<float>>& params,
                                     const std::vector<std::span<const double>>& analytic,
                                     const std::function<double()>& eval, float step,
                                     const std::function<bool()>& crossed_kink) {
    if (params.size() != analytic.size()) throw error("check_gradients_fd: list mismatch");
    grad_check_report report;
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].size(); ++i) {
            float& p = params[t][i];
            const float orig = p;
            p = orig + step;
            const double p_plus = p;
            const double lp = eval();
            bool crossed = crossed_kink && crossed_kink();
            p = orig - step;
            const double p_minus = p;
            const double lm = eval();
            crossed = crossed || (crossed_kink && crossed_kink());
            p = orig;
            if (crossed) {
                ++report.skipped;
                continue;
            }
            // The realized float step can differ slightly from the nominal
            // one; divide by the actual spread.
            const double numeric = (lp - lm) / (p_plus - p_minus);
            const double a = analytic[t][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
            ++report.checked;
        }
    }
    return report;
}

grad_check_report check_gradients(dense_net& net, std::span<const double> x, const loss_spec& loss,
                                  float step) {
    forward_tape base_tape;
    const auto y0 = forward(net, x, base_tape);
    const auto [l0, dy] = loss(y0);
    (void)l0;
    net_grads grads = make_grads(net);
    backward(net, base_tape, dy, grads);

    auto relu_pattern = [&net](const forward_tape& t) {
        std::vector<char> s;
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            if (net.layers[i].act != activation::relu) continue;
            for (double z : t.preacts[i]) s.push_back(z > 0.0 ? 1 : 0);
        }
        return s;
    };
    const auto base_pattern = relu_pattern(base_tape);

    forward_tape scratch;
    bool last_crossed = false;
    const auto eval = [&]() {
        const auto y = forward(net, x, scratch);
        last_crossed = relu_pattern(scratch) != base_pattern;
        return loss(y).first;
    };
    return check_gradients_fd(collect_parameters(net), collect_gradients(grads), eval, step,
                              [&]() { return last_crossed; });
}

} // namespace aird
