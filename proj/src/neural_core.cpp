#include "dynimp/neural_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace dynimp {

double activate(Activation act, double a) {
    switch (act) {
        case Activation::identity: return a;
        case Activation::sigmoid: return sigmoid(a);
        case Activation::tanh: return std::tanh(a);
    }
    return a;
}

double activation_grad_from_output(Activation act, double y) {
    switch (act) {
        case Activation::identity: return 1.0;
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::tanh: return 1.0 - y * y;
    }
    return 1.0;
}

std::vector<double> dense_forward(const DenseParams& p, std::span<const double> x, Activation act) {
    if (x.size() != p.input_size()) {
        throw std::invalid_argument("dense_forward: input size " + std::to_string(x.size()) + ", expected " +
                                    std::to_string(p.input_size()));
    }
    std::vector<double> y(p.output_size());
    for (std::size_t o = 0; o < y.size(); ++o) {
        double a = p.bias(o, 0);
        const auto w = p.weight.row(o);
        for (std::size_t i = 0; i < x.size(); ++i) a += w[i] * x[i];
        y[o] = activate(act, a);
    }
    return y;
}

void dense_backward(const DenseParams& p, std::span<const double> x, std::span<const double> y,
                    std::span<const double> dy, Activation act, DenseParams& grads, std::span<double> dx) {
    if (x.size() != p.input_size() || y.size() != p.output_size() || dy.size() != p.output_size()) {
        throw std::invalid_argument("dense_backward: shape mismatch");
    }
    if (!dx.empty() && dx.size() != p.input_size()) throw std::invalid_argument("dense_backward: dx size mismatch");
    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t o = 0; o < y.size(); ++o) {
        const double da = dy[o] * activation_grad_from_output(act, y[o]);
        if (da == 0.0) continue;
        grads.bias(o, 0) += da;
        auto gw = grads.weight.row(o);
        const auto w = p.weight.row(o);
        for (std::size_t i = 0; i < x.size(); ++i) {
            gw[i] += da * x[i];
            if (!dx.empty()) dx[i] += da * w[i];
        }
    }
}

LstmStep lstm_cell_forward(const LstmParams& p, std::span<const double> x, const LstmState& prev) {
    const auto H = p.hidden_size();
    const auto D = p.input_size();
    if (x.size() != D) {
        throw std::invalid_argument("lstm_cell_forward: input size " + std::to_string(x.size()) + ", expected " +
                                    std::to_string(D));
    }
    if (prev.h.size() != H || prev.c.size() != H) {
        throw std::invalid_argument("lstm_cell_forward: state size mismatch (hidden " + std::to_string(H) + ")");
    }
    LstmStep step;
    auto& k = step.cache;
    k.x.assign(x.begin(), x.end());
    k.h_prev = prev.h;
    k.c_prev = prev.c;
    k.input.resize(H);
    k.forget.resize(H);
    k.candidate.resize(H);
    k.output.resize(H);
    k.c.resize(H);
    k.tanh_c.resize(H);

    std::vector<double> pre(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
        double a = p.bias(r, 0);
        const auto wx = p.w_input.row(r);
        for (std::size_t d = 0; d < D; ++d) a += wx[d] * x[d];
        const auto wh = p.w_recurrent.row(r);
        for (std::size_t j = 0; j < H; ++j) a += wh[j] * prev.h[j];
        pre[r] = a;
    }
    step.state = LstmState::zeros(H);
    for (std::size_t j = 0; j < H; ++j) {
        k.input[j] = sigmoid(pre[LstmParams::input_gate * H + j]);
        k.forget[j] = sigmoid(pre[LstmParams::forget_gate * H + j]);
        k.candidate[j] = std::tanh(pre[LstmParams::candidate_gate * H + j]);
        k.output[j] = sigmoid(pre[LstmParams::output_gate * H + j]);
        k.c[j] = prev.c[j] * k.forget[j] + k.candidate[j] * k.input[j];
        k.tanh_c[j] = std::tanh(k.c[j]);
        step.state.c[j] = k.c[j];
        step.state.h[j] = k.output[j] * k.tanh_c[j];
    }
    return step;
}

LstmSequence lstm_sequence_forward(const LstmParams& p, const Tensor2& xs, const LstmState& init) {
    if (xs.rows() < 1) throw std::invalid_argument("lstm_sequence_forward: empty sequence");
    const auto H = p.hidden_size();
    LstmSequence seq;
    seq.hidden = Tensor2(xs.rows(), H);
    seq.caches.reserve(xs.rows());
    LstmState state = init.h.empty() ? LstmState::zeros(H) : init;
    for (std::size_t t = 0; t < xs.rows(); ++t) {
        auto step = lstm_cell_forward(p, xs.row(t), state);
        std::copy(step.state.h.begin(), step.state.h.end(), seq.hidden.row(t).begin());
        state = std::move(step.state);
        seq.caches.push_back(std::move(step.cache));
    }
    seq.final_state = std::move(state);
    return seq;
}

namespace {

void lstm_backward_impl(const LstmParams& p, const std::vector<LstmStepCache>& caches, const Tensor2& dh,
                        LstmParams& grads, Tensor2* dx) {
    const auto H = p.hidden_size();
    const auto D = p.input_size();
    const auto T = caches.size();
    if (dh.rows() != T || dh.cols() != H) {
        throw std::invalid_argument("lstm_backward: upstream gradient is " + std::to_string(dh.rows()) + "x" +
                                    std::to_string(dh.cols()) + ", expected " + std::to_string(T) + "x" +
                                    std::to_string(H));
    }
    if (grads.hidden_size() != H || grads.input_size() != D) {
        throw std::invalid_argument("lstm_backward: gradient container shape mismatch");
    }
    std::vector<double> dh_next(H, 0.0);
    std::vector<double> dc_next(H, 0.0);
    std::vector<double> dpre(4 * H);
    for (std::size_t s = T; s-- > 0;) {
        const auto& k = caches[s];
        if (k.x.size() != D || k.c.size() != H) throw std::invalid_argument("lstm_backward: cache shape mismatch");
        for (std::size_t j = 0; j < H; ++j) {
            const double dht = dh(s, j) + dh_next[j];
            const double dout = dht * k.tanh_c[j];
            const double dc = dc_next[j] + dht * k.output[j] * (1.0 - k.tanh_c[j] * k.tanh_c[j]);
            const double din = dc * k.candidate[j];
            const double dcand = dc * k.input[j];
            const double dforget = dc * k.c_prev[j];
            dc_next[j] = dc * k.forget[j];
            dpre[LstmParams::input_gate * H + j] = din * k.input[j] * (1.0 - k.input[j]);
            dpre[LstmParams::forget_gate * H + j] = dforget * k.forget[j] * (1.0 - k.forget[j]);
            dpre[LstmParams::candidate_gate * H + j] = dcand * (1.0 - k.candidate[j] * k.candidate[j]);
            dpre[LstmParams::output_gate * H + j] = dout * k.output[j] * (1.0 - k.output[j]);
        }
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        if (dx) {
            for (std::size_t d = 0; d < D; ++d) (*dx)(s, d) = 0.0;
        }
        for (std::size_t r = 0; r < 4 * H; ++r) {
            const double g = dpre[r];
            if (g == 0.0) continue;
            grads.bias(r, 0) += g;
            auto gwx = grads.w_input.row(r);
            const auto wx = p.w_input.row(r);
            for (std::size_t d = 0; d < D; ++d) {
                gwx[d] += g * k.x[d];
                if (dx) (*dx)(s, d) += g * wx[d];
            }
            auto gwh = grads.w_recurrent.row(r);
            const auto wh = p.w_recurrent.row(r);
            for (std::size_t j = 0; j < H; ++j) {
                gwh[j] += g * k.h_prev[j];
                dh_next[j] += g * wh[j];
            }
        }
    }
}

}  // namespace

LstmGradients lstm_backward(const LstmParams& p, const std::vector<LstmStepCache>& caches, const Tensor2& dh) {
    LstmGradients out{LstmParams(p.input_size(), p.hidden_size()), Tensor2(caches.size(), p.input_size())};
    lstm_backward_impl(p, caches, dh, out.params, &out.inputs);
    return out;
}

void lstm_backward_accumulate(const LstmParams& p, const std::vector<LstmStepCache>& caches, const Tensor2& dh,
                              LstmParams& grads) {
    lstm_backward_impl(p, caches, dh, grads, nullptr);
}

void init_uniform_fan_in(LstmParams& p, Rng& rng, double forget_bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.input_size() + p.hidden_size()));
    for (auto* t : p.tensors()) {
        for (auto& v : t->flat()) v = rng.uniform(-bound, bound);
    }
    for (std::size_t j = 0; j < p.hidden_size(); ++j) p.b(LstmParams::forget_gate, j) = forget_bias;
}

void init_uniform_fan_in(DenseParams& p, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.input_size()));
    for (auto* t : p.tensors()) {
        for (auto& v : t->flat()) v = rng.uniform(-bound, bound);
    }
}

std::size_t total_size(std::span<const Tensor2* const> tensors) {
    std::size_t n = 0;
    for (const auto* t : tensors) n += t->size();
    return n;
}

std::vector<double> flatten(std::span<const Tensor2* const> tensors) {
    std::vector<double> out;
    out.reserve(total_size(tensors));
    for (const auto* t : tensors) out.insert(out.end(), t->data().begin(), t->data().end());
    return out;
}

void unflatten(std::span<const double> flat, std::span<Tensor2* const> tensors) {
    std::size_t n = 0;
    for (const auto* t : tensors) n += t->size();
    if (n != flat.size()) throw std::invalid_argument("unflatten: size mismatch");
    std::size_t off = 0;
    for (auto* t : tensors) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), t->size(), t->data().begin());
        off += t->size();
    }
}

double global_norm(std::span<const Tensor2* const> tensors) {
    double ss = 0.0;
    for (const auto* t : tensors) {
        for (double v : t->data()) ss += v * v;
    }
    return std::sqrt(ss);
}

double clip_global_norm(std::span<Tensor2* const> tensors, double max_norm) {
    double ss = 0.0;
    for (const auto* t : tensors) {
        for (double v : t->data()) ss += v * v;
    }
    const double norm = std::sqrt(ss);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto* t : tensors) {
            for (auto& v : t->flat()) v *= s;
        }
    }
    return norm;
}

AdamState AdamState::zeros_like(std::span<const Tensor2* const> params) {
    AdamState s;
    for (const auto* t : params) {
        s.first.emplace_back(t->rows(), t->cols(), 0.0);
        s.second.emplace_back(t->rows(), t->cols(), 0.0);
    }
    return s;
}

void adam_step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads, AdamState& state,
               const AdamHyper& hyper) {
    if (params.size() != grads.size() || params.size() != state.first.size() ||
        params.size() != state.second.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient/moment count mismatch");
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        const auto& g = *grads[i];
        auto& m = state.first[i];
        auto& v = state.second[i];
        if (!p.same_shape(g) || !p.same_shape(m) || !p.same_shape(v)) {
            throw std::invalid_argument("adam_step: shape mismatch in tensor " + std::to_string(i));
        }
        auto pf = p.flat();
        auto gf = g.flat();
        auto mf = m.flat();
        auto vf = v.flat();
        for (std::size_t j = 0; j < pf.size(); ++j) {
            mf[j] = hyper.beta1 * mf[j] + (1.0 - hyper.beta1) * gf[j];
            vf[j] = hyper.beta2 * vf[j] + (1.0 - hyper.beta2) * gf[j] * gf[j];
            const double mhat = mf[j] / c1;
            const double vhat = vf[j] / c2;
            pf[j] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.epsilon);
        }
    }
}

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << "grad-check: " << checked << " parameters, max relative error " << max_rel_error << " (tolerance "
       << tolerance << ") " << (passed() ? "PASS" : "FAIL");
    for (const auto& e : worst) {
        os << "\n  #" << e.index << " analytic=" << e.analytic << " numeric=" << e.numeric << " rel=" << e.rel_error;
    }
    return os.str();
}

GradCheckReport grad_check(const std::function<double()>& loss, std::span<double* const> params,
                           std::span<const double> analytic, double eps, double tolerance,
                           std::span<const std::size_t> indices) {
    if (!(eps > 0.0)) throw std::invalid_argument("grad_check: epsilon must be positive");
    if (analytic.size() != params.size()) throw std::invalid_argument("grad_check: gradient/parameter size mismatch");
    const double l0 = loss();
    const double l1 = loss();
    if (!(l0 == l1)) {
        throw std::runtime_error("grad_check: loss closure is not deterministic (" + std::to_string(l0) + " vs " +
                                 std::to_string(l1) + ")");
    }
    std::vector<std::size_t> all;
    if (indices.empty()) {
        all.resize(params.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        indices = all;
    }
    GradCheckReport report;
    report.tolerance = tolerance;
    std::vector<GradCheckEntry> entries;
    entries.reserve(indices.size());
    for (auto idx : indices) {
        if (idx >= params.size()) throw std::out_of_range("grad_check: parameter index out of range");
        double& p = *params[idx];
        const double saved = p;
        p = saved + eps;
        const double up = loss();
        p = saved - eps;
        const double down = loss();
        p = saved;
        const double numeric = (up - down) / (2.0 * eps);
        entries.push_back({idx, analytic[idx], numeric, relative_error(analytic[idx], numeric)});
    }
    report.checked = entries.size();
    std::stable_sort(entries.begin(), entries.end(),
                     [](const GradCheckEntry& a, const GradCheckEntry& b) { return a.rel_error > b.rel_error; });
    if (!entries.empty()) report.max_rel_error = entries.front().rel_error;
    entries.resize(std::min<std::size_t>(entries.size(), 10));
    report.worst = std::move(entries);
    return report;
}

std::vector<double*> scalar_refs(std::span<Tensor2* const> tensors) {
    std::vector<double*> out;
    for (auto* t : tensors) {
        for (auto& v : t->flat()) out.push_back(&v);
    }
    return out;
}

}  // namespace dynimp
