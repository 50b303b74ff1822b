#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dynimp/rng.hpp"
#include "dynimp/tensor.hpp"

namespace dynimp {

enum class Activation { identity, sigmoid, tanh };

inline double sigmoid(double a) {
    // split form keeps exp() from overflowing for large |a|
    if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

double activate(Activation act, double a);
/// Derivative expressed through the activation output y = act(a).
double activation_grad_from_output(Activation act, double y);

/// Affine map y = act(W x + b) with W out x in.
struct DenseParams {
    Tensor2 weight;
    Tensor2 bias;  // out x 1

    DenseParams() = default;
    DenseParams(std::size_t in, std::size_t out) : weight(out, in, 0.0), bias(out, 1, 0.0) {}

    std::size_t input_size() const { return weight.cols(); }
    std::size_t output_size() const { return weight.rows(); }

    std::vector<Tensor2*> tensors() { return {&weight, &bias}; }
    std::vector<const Tensor2*> tensors() const { return {&weight, &bias}; }

    friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

std::vector<double> dense_forward(const DenseParams& p, std::span<const double> x, Activation act);

/// Accumulates parameter gradients into `grads` and writes dL/dx into `dx` (may be empty).
/// `y` is the forward output, `dy` the upstream gradient dL/dy.
void dense_backward(const DenseParams& p, std::span<const double> x, std::span<const double> y,
                    std::span<const double> dy, Activation act, DenseParams& grads, std::span<double> dx);

/// LSTM weights. Gate blocks are stacked in rows [input | forget | candidate | output], H rows each.
struct LstmParams {
    Tensor2 w_input;      // 4H x D
    Tensor2 w_recurrent;  // 4H x H
    Tensor2 bias;         // 4H x 1

    enum Gate : std::size_t { input_gate = 0, forget_gate = 1, candidate_gate = 2, output_gate = 3 };

    LstmParams() = default;
    LstmParams(std::size_t input_size, std::size_t hidden_size)
        : w_input(4 * hidden_size, input_size, 0.0),
          w_recurrent(4 * hidden_size, hidden_size, 0.0),
          bias(4 * hidden_size, 1, 0.0) {}

    std::size_t input_size() const { return w_input.cols(); }
    std::size_t hidden_size() const { return w_recurrent.cols(); }

    double& b(Gate g, std::size_t j) { return bias(g * hidden_size() + j, 0); }
    double b(Gate g, std::size_t j) const { return bias(g * hidden_size() + j, 0); }

    std::vector<Tensor2*> tensors() { return {&w_input, &w_recurrent, &bias}; }
    std::vector<const Tensor2*> tensors() const { return {&w_input, &w_recurrent, &bias}; }

    friend bool operator==(const LstmParams&, const LstmParams&) = default;
};

struct LstmState {
    std::vector<double> h;
    std::vector<double> c;

    static LstmState zeros(std::size_t hidden) { return {std::vector<double>(hidden, 0.0), std::vector<double>(hidden, 0.0)}; }
};

/// Everything the backward pass needs from one step.
struct LstmStepCache {
    std::vector<double> x;
    std::vector<double> h_prev;
    std::vector<double> c_prev;
    std::vector<double> input;      // I_t
    std::vector<double> forget;     // F_t
    std::vector<double> candidate;  // C~_t
    std::vector<double> output;     // Y_t
    std::vector<double> c;
    std::vector<double> tanh_c;
};

struct LstmStep {
    LstmState state;
    LstmStepCache cache;
};

/// One step of I,F,Y = sigmoid(.), C~ = tanh(.), c = c_prev*F + C~*I, h = Y*tanh(c).
LstmStep lstm_cell_forward(const LstmParams& p, std::span<const double> x, const LstmState& prev);

struct LstmSequence {
    Tensor2 hidden;  // T x H
    std::vector<LstmStepCache> caches;
    LstmState final_state;
};

/// Runs the cell over the rows of `xs`; an empty `init` means zero state.
LstmSequence lstm_sequence_forward(const LstmParams& p, const Tensor2& xs, const LstmState& init = {});

struct LstmGradients {
    LstmParams params;
    Tensor2 inputs;  // T x D, dL/dx_t
};

/// Backpropagation through time given dL/dh_t for every step (T x H).
LstmGradients lstm_backward(const LstmParams& p, const std::vector<LstmStepCache>& caches, const Tensor2& dh);

/// As lstm_backward but adds parameter gradients into `grads` and skips input gradients.
void lstm_backward_accumulate(const LstmParams& p, const std::vector<LstmStepCache>& caches, const Tensor2& dh,
                              LstmParams& grads);

void init_uniform_fan_in(LstmParams& p, Rng& rng, double forget_bias = 1.0);
void init_uniform_fan_in(DenseParams& p, Rng& rng);

// ---------------------------------------------------------------------------
// Parameter-set helpers. A parameter set is any ordered list of tensors.

std::size_t total_size(std::span<const Tensor2* const> tensors);
std::vector<double> flatten(std::span<const Tensor2* const> tensors);
void unflatten(std::span<const double> flat, std::span<Tensor2* const> tensors);
double global_norm(std::span<const Tensor2* const> tensors);
/// Rescales all tensors so their global L2 norm is at most max_norm. Returns the pre-clip norm.
double clip_global_norm(std::span<Tensor2* const> tensors, double max_norm);

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<Tensor2> first;
    std::vector<Tensor2> second;
    std::int64_t step = 0;

    static AdamState zeros_like(std::span<const Tensor2* const> params);
    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam update applied in place.
void adam_step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads, AdamState& state,
               const AdamHyper& hyper);

// ---------------------------------------------------------------------------

struct GradCheckEntry {
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t checked = 0;
    std::vector<GradCheckEntry> worst;  // descending by rel_error, at most 10

    bool passed() const { return max_rel_error <= tolerance; }
    std::string summary() const;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps near-zero
/// gradients from reporting rounding noise as large relative error.
inline constexpr double kGradCheckFloor = 1e-6;
double relative_error(double analytic, double numeric, double floor = kGradCheckFloor);

/// Central differences of `loss` against `analytic` for the listed flat indices
/// (all when empty). `params` is the flat view the closure reads through.
/// Throws if eps <= 0 or the closure is not deterministic.
GradCheckReport grad_check(const std::function<double()>& loss, std::span<double* const> params,
                           std::span<const double> analytic, double eps, double tolerance,
                           std::span<const std::size_t> indices = {});

/// Pointers to every scalar of a parameter set, in flatten() order.
std::vector<double*> scalar_refs(std::span<Tensor2* const> tensors);

}  // namespace dynimp
