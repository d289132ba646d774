#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "aird/error.hpp"
#include "aird/rng.hpp"

namespace aird {

enum class activation : std::uint8_t { linear = 0, relu = 1, sigmoid = 2 };

// Row-major out x in matrix of float32 parameters. Parameters are stored in
// 32-bit floats (the checkpoint format's unit); all forward/backward
// arithmetic runs in 64-bit.
struct mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> a;

    mat() = default;
    mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0f) {}
    float& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    float operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
};

struct dense_layer {
    mat w;                // out x in
    std::vector<float> b; // out
    activation act = activation::linear;
};

struct dense_net {
    std::vector<dense_layer> layers;

    std::size_t input_size() const { return layers.empty() ? 0 : layers.front().w.cols; }
    std::size_t output_size() const { return layers.empty() ? 0 : layers.back().w.rows; }
    std::size_t parameter_count() const;
};

// Pre-activations and layer inputs cached by forward, consumed by backward.
struct forward_tape {
    std::vector<std::vector<double>> inputs;  // per layer
    std::vector<std::vector<double>> preacts; // per layer
    std::vector<double> output;
};

// Parameter gradients mirroring a dense_net's shapes, accumulated in 64-bit.
struct dmat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    dmat() = default;
    dmat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
    double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
};

struct net_grads {
    std::vector<dmat> dw;
    std::vector<std::vector<double>> db;

    void zero();
    void scale(double s);
};

net_grads make_grads(const dense_net& net);

// Seeded uniform fan-in initialization: U(-1/sqrt(in), 1/sqrt(in)) weights,
// zero biases.
dense_net make_dense_net(std::size_t input, const std::vector<std::size_t>& widths,
                         const std::vector<activation>& acts, rng& gen);

std::vector<double> forward(const dense_net& net, std::span<const double> x, forward_tape& tape);
std::vector<double> forward(const dense_net& net, std::span<const double> x);

// Exact reverse-mode gradients; accumulates into `grads` and returns the
// input gradient. Throws on a tape that does not match the net.
std::vector<double> backward(const dense_net& net, const forward_tape& tape,
                             std::span<const double> output_grad, net_grads& grads);

// c_k = exp(s_k / tau) / sum_j exp(s_j / tau), max-subtracted for stability.
std::vector<double> softmax_temperature(std::span<const double> scores, double tau);

// d(loss)/d(scores) for a softmax_temperature output given d(loss)/d(weights).
std::vector<double> softmax_temperature_backward(std::span<const double> weights,
                                                 std::span<const double> dweights, double tau);

inline constexpr double probability_clamp = 1e-7;

struct bce_result {
    double loss = 0.0;
    double dloss_dp = 0.0;
};

// Binary cross-entropy of a probability clamped into
// [probability_clamp, 1 - probability_clamp], with its analytic gradient.
bce_result bce_terms(double p, int target);

struct xent_result {
    double loss = 0.0;
    std::vector<double> dlogits;
};

// Softmax cross-entropy over raw logits against an integer class target.
xent_result softmax_xent(std::span<const double> logits, std::size_t target);

struct adam_config {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Bias-corrected adaptive-moment state over an ordered list of parameter
// tensors (the order used by collect_parameters).
struct adam_state {
    adam_config cfg;
    std::uint64_t step = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
};

adam_state make_adam(const adam_config& cfg, const std::vector<std::span<float>>& params);
void adam_step(const std::vector<std::span<float>>& params,
               const std::vector<std::span<const double>>& grads, adam_state& state);

// Flat views of every parameter tensor, in layer order (w then b).
std::vector<std::span<float>> collect_parameters(dense_net& net);
std::vector<std::span<const double>> collect_gradients(const net_grads& grads);

struct grad_check_report {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

// A scalar loss on the net output along with d(loss)/d(output).
using loss_spec = std::function<std::pair<double, std::vector<double>>(std::span<const double>)>;

// Compares analytic gradients against central finite differences, parameter
// by parameter. Relative error is |a - n| / max(|a|, |n|, 1e-8). Parameters
// whose +-step perturbation flips a relu unit across its kink are excluded
// from the comparison; random test points should keep pre-activation margins
// above 10 * step so that nothing is excluded.
grad_check_report check_gradients(dense_net& net, std::span<const double> x,
                                  const loss_spec& loss, float step);

// Finite-difference check over an arbitrary parameter list. `eval` must
// recompute the scalar loss from current parameter values; `analytic` holds
// d(loss)/d(param) aligned with `params`. `crossed_kink`, when provided,
// reports whether the current evaluation sits on a different relu side than
// the base run, in which case the parameter is skipped.
grad_check_report check_gradients_fd(const std::vector<std::span<float>>& params,
                                     const std::vector<std::span<const double>>& analytic,
                                     const std::function<double()>& eval, float step,
                                     const std::function<bool()>& crossed_kink = nullptr);

} // namespace aird
