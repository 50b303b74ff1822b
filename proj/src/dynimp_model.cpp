#include "dynimp/dynimp_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dynimp/kernels.hpp"
#include "dynimp/rng.hpp"

namespace dynimp {

namespace {

constexpr double kProbClamp = 1e-7;
constexpr double kRangeSlack = 1e-9;

}  // namespace

std::string to_string(LossMode mode) { return mode == LossMode::bce ? "bce" : "mse"; }

LossMode parse_loss_mode(const std::string& s) {
    if (s == "bce") return LossMode::bce;
    if (s == "mse") return LossMode::mse;
    throw std::invalid_argument("unknown loss '" + s + "' (expected bce | mse)");
}

void DynImpConfig::validate() const {
    if (hidden < 1) throw std::invalid_argument("hidden size must be >= 1");
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw std::invalid_argument("corruption keep probability must be in (0, 1]");
    if (neighbors < 1) throw std::invalid_argument("neighbor count k must be >= 1");
    if (batch < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(adam.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
        throw std::invalid_argument("Adam betas must be in [0, 1)");
    }
    if (!(clip_norm > 0.0)) throw std::invalid_argument("gradient clip norm must be positive");
}

DynImpModel make_model(std::size_t num_features, const DynImpConfig& config, std::uint64_t seed) {
    config.validate();
    DynImpModel m;
    m.config = config;
    m.seed = seed;
    m.encoder = LstmParams(num_features, config.hidden);
    m.decoder = DenseParams(config.hidden, num_features);
    Rng rng(derive_seed(seed, {0x696e6974ULL}));
    init_uniform_fan_in(m.encoder, rng);
    init_uniform_fan_in(m.decoder, rng);
    m.feature_means.assign(num_features, 0.5);
    m.optimizer = AdamState::zeros_like(m.tensors());
    return m;
}

void ModelGradients::add(const ModelGradients& other) {
    auto dst = tensors();
    auto src = other.tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        auto d = dst[i]->flat();
        auto s = src[i]->flat();
        for (std::size_t j = 0; j < d.size(); ++j) d[j] += s[j];
    }
}

void ModelGradients::scale(double s) {
    for (auto* t : tensors()) {
        for (auto& v : t->flat()) v *= s;
    }
}

Corrupted corrupt(const Tensor2& x, const MaskMatrix& mask, const CorruptionSpec& spec) {
    require_same_shape(x, mask, "corrupt");
    if (!(spec.keep_prob > 0.0 && spec.keep_prob <= 1.0)) {
        throw std::invalid_argument("corruption keep probability must be in (0, 1]");
    }
    Corrupted out{x, mask};
    if (spec.keep_prob == 1.0) return out;
    Rng rng(spec.seed);
    for (std::size_t t = 0; t < x.rows(); ++t) {
        for (std::size_t f = 0; f < x.cols(); ++f) {
            if (!rng.bernoulli(spec.keep_prob)) {
                out.values(t, f) = 0.0;
                out.effective_mask.set(t, f, false);
            }
        }
    }
    return out;
}

PaddingMatrix strategy_padding(const DynImpModel& model, const Tensor2& values, const MaskMatrix& mask) {
    const auto T = values.rows();
    const auto F = values.cols();
    if (mask.all_observed()) return {Tensor2(T, F, 0.0)};
    auto mean_padding = [&] {
        Tensor2 p(T, F, 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t f = 0; f < F; ++f) {
                if (!mask(t, f)) p(t, f) = model.feature_means[f];
            }
        }
        return PaddingMatrix{std::move(p)};
    };
    switch (model.config.padding) {
        case ImputerKind::zero: return {Tensor2(T, F, 0.0)};
        case ImputerKind::mean: return mean_padding();
        case ImputerKind::interp: return {detail::interpolation_estimates(values, mask)};
        case ImputerKind::knn:
            if (mask.count_observed() == 0) return mean_padding();
            return build_padding(values, mask, model.config.neighbors);
    }
    throw std::logic_error("unhandled padding strategy");
}

ForwardPass forward(const DynImpModel& model, const Window& window, const CorruptionSpec& spec) {
    const auto F = model.num_features();
    if (window.features() != F) {
        throw std::invalid_argument("model expects " + std::to_string(F) + " features, window has " +
                                    std::to_string(window.features()));
    }
    require_same_shape(window.values, window.mask, "forward");
    if (model.config.loss == LossMode::bce) {
        for (std::size_t t = 0; t < window.length(); ++t) {
            for (std::size_t f = 0; f < F; ++f) {
                if (!window.mask(t, f)) continue;
                const double v = window.values(t, f);
                if (v < -kRangeSlack || v > 1.0 + kRangeSlack) {
                    throw std::invalid_argument("cell (" + std::to_string(t) + ", " + std::to_string(f) + ") = " +
                                                std::to_string(v) + " lies outside [0, 1]; bce needs scaled input");
                }
            }
        }
    }
    ForwardPass fp;
    fp.corrupted = corrupt(window.values, window.mask, spec);
    const auto padding = strategy_padding(model, fp.corrupted.values, fp.corrupted.effective_mask);
    fp.input = masked_combine(fp.corrupted.values, fp.corrupted.effective_mask, padding);
    fp.encoded = lstm_sequence_forward(model.encoder, fp.input);
    fp.reconstruction = Tensor2(window.length(), F);
    const auto act = model.output_activation();
    for (std::size_t t = 0; t < window.length(); ++t) {
        const auto z = dense_forward(model.decoder, fp.encoded.hidden.row(t), act);
        std::copy(z.begin(), z.end(), fp.reconstruction.row(t).begin());
    }
    return fp;
}

double reconstruction_loss(const Tensor2& z, const Tensor2& x, const MaskMatrix& train_mask, LossMode mode) {
    require_same_shape(z, train_mask, "loss");
    if (!z.same_shape(x)) throw std::invalid_argument("loss: target shape mismatch");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < z.rows(); ++t) {
        for (std::size_t f = 0; f < z.cols(); ++f) {
            if (!train_mask(t, f)) continue;
            ++n;
            const double xv = x(t, f);
            if (mode == LossMode::bce) {
                const double zc = std::clamp(z(t, f), kProbClamp, 1.0 - kProbClamp);
                sum -= xv * std::log(zc) + (1.0 - xv) * std::log(1.0 - zc);
            } else {
                const double d = z(t, f) - xv;
                sum += d * d;
            }
        }
    }
    if (n == 0) throw std::invalid_argument("loss: no cells selected by the training mask");
    return sum / static_cast<double>(n);
}

Tensor2 reconstruction_loss_grad(const Tensor2& z, const Tensor2& x, const MaskMatrix& train_mask, LossMode mode) {
    require_same_shape(z, train_mask, "loss gradient");
    const auto n = train_mask.count_observed();
    if (n == 0) throw std::invalid_argument("loss: no cells selected by the training mask");
    const double inv = 1.0 / static_cast<double>(n);
    Tensor2 g(z.rows(), z.cols(), 0.0);
    for (std::size_t t = 0; t < z.rows(); ++t) {
        for (std::size_t f = 0; f < z.cols(); ++f) {
            if (!train_mask(t, f)) continue;
            const double xv = x(t, f);
            const double zv = z(t, f);
            if (mode == LossMode::bce) {
                if (zv <= kProbClamp || zv >= 1.0 - kProbClamp) continue;  // clamp is flat
                g(t, f) = inv * ((1.0 - xv) / (1.0 - zv) - xv / zv);
            } else {
                g(t, f) = inv * 2.0 * (zv - xv);
            }
        }
    }
    return g;
}

std::optional<double> window_gradient(const DynImpModel& model, const Window& window, const CorruptionSpec& spec,
                                      ModelGradients& grads) {
    if (window.mask.count_observed() == 0) return std::nullopt;
    const auto fp = forward(model, window, spec);
    const double loss = reconstruction_loss(fp.reconstruction, window.values, window.mask, model.config.loss);
    const auto dz = reconstruction_loss_grad(fp.reconstruction, window.values, window.mask, model.config.loss);

    const auto T = window.length();
    const auto H = model.encoder.hidden_size();
    const auto act = model.output_activation();
    Tensor2 dh(T, H, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        dense_backward(model.decoder, fp.encoded.hidden.row(t), fp.reconstruction.row(t), dz.row(t), act,
                       grads.decoder, dh.row(t));
    }
    lstm_backward_accumulate(model.encoder, fp.encoded.caches, dh, grads.encoder);
    return loss;
}

CorruptionSpec training_corruption(const DynImpModel& model, std::size_t epoch, std::size_t window_index) {
    return {model.config.keep_prob, derive_seed(model.seed, {0x636f7272ULL, epoch, window_index})};
}

std::vector<EpochReport> train(DynImpModel& model, const std::vector<Window>& windows,
                               const std::function<void(const EpochReport&)>& on_epoch) {
    const auto& cfg = model.config;
    cfg.validate();
    std::vector<EpochReport> log;
    if (cfg.epochs == 0 || windows.empty()) return log;

    std::vector<std::size_t> order(windows.size());
    const auto first = model.epochs_completed;
    for (std::size_t epoch = first; epoch < first + cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(model.seed, {0x73687566ULL, epoch}));
        shuffle_rng.shuffle(order.begin(), order.end());

        double epoch_loss = 0.0;
        std::size_t epoch_windows = 0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch, ++batch_index) {
            const auto stop = std::min(order.size(), start + cfg.batch);
            const std::span<const std::size_t> members(order.data() + start, stop - start);
            const auto batch = cfg.parallel ? parallel::batch_gradient(model, windows, members, epoch)
                                            : serial::batch_gradient(model, windows, members, epoch);
            if (!std::isfinite(batch.loss_sum)) throw TrainingDiverged(epoch, batch_index);
            if (batch.count == 0) continue;
            epoch_loss += batch.loss_sum;
            epoch_windows += batch.count;

            ModelGradients g = batch.grads;
            g.scale(1.0 / static_cast<double>(batch.count));
            auto gt = g.tensors();
            clip_global_norm(gt, cfg.clip_norm);
            auto pt = model.tensors();
            std::vector<const Tensor2*> cg(gt.begin(), gt.end());
            adam_step(pt, cg, model.optimizer, cfg.adam);
        }
        model.epochs_completed = epoch + 1;
        EpochReport rep{epoch, epoch_windows ? epoch_loss / static_cast<double>(epoch_windows) : 0.0};
        log.push_back(rep);
        if (on_epoch) on_epoch(rep);
    }
    return log;
}

ImputedWindow impute(const DynImpModel& model, const Window& window) {
    if (window.features() != model.num_features()) {
        throw std::invalid_argument("impute: window has " + std::to_string(window.features()) +
                                    " features, model expects " + std::to_string(model.num_features()));
    }
    ImputedWindow out{window.values, window.mask};
    if (window.mask.all_observed()) return out;
    const auto fp = forward(model, window, CorruptionSpec{1.0, 0});
    for (std::size_t t = 0; t < window.length(); ++t) {
        for (std::size_t f = 0; f < window.features(); ++f) {
            if (!window.mask(t, f)) out.values(t, f) = fp.reconstruction(t, f);
        }
    }
    return out;
}

GradCheckReport grad_check_model(DynImpModel& model, const Window& window, const CorruptionSpec& spec, double eps,
                                 double tolerance, std::size_t samples, std::uint64_t sample_seed) {
    ModelGradients grads(model);
    if (!window_gradient(model, window, spec, grads)) {
        throw std::invalid_argument("grad_check_model: window has no observed cell");
    }
    auto gt = grads.tensors();
    std::vector<const Tensor2*> cg(gt.begin(), gt.end());
    const auto analytic = flatten(cg);
    auto pt = model.tensors();
    const auto refs = scalar_refs(pt);

    std::vector<std::size_t> indices;
    if (samples > 0 && samples < refs.size()) {
        std::vector<std::size_t> all(refs.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        Rng rng(sample_seed);
        rng.shuffle(all.begin(), all.end());
        indices.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(samples));
        std::sort(indices.begin(), indices.end());
    }
    auto closure = [&] {
        const auto fp = forward(model, window, spec);
        return reconstruction_loss(fp.reconstruction, window.values, window.mask, model.config.loss);
    };
    return grad_check(closure, refs, analytic, eps, tolerance, indices);
}

bool GradCheckSuite::passed() const {
    return std::all_of(reports.begin(), reports.end(), [](const GradCheckReport& r) { return r.passed(); });
}

GradCheckSuite grad_check_random_instances(std::size_t instances, const DynImpConfig& base, double eps,
                                           double tolerance, std::size_t samples, std::uint64_t seed) {
    GradCheckSuite suite;
    for (std::size_t i = 0; i < instances; ++i) {
        Rng rng(derive_seed(seed, {0x67636b00ULL, i}));
        const auto T = 2 + static_cast<std::size_t>(rng.below(4));
        const auto F = 1 + static_cast<std::size_t>(rng.below(3));
        DynImpConfig cfg = base;
        cfg.hidden = 1 + static_cast<std::size_t>(rng.below(4));
        auto model = make_model(F, cfg, derive_seed(seed, {0x6d6f646cULL, i}));
        for (auto* t : model.tensors()) {
            for (auto& v : t->flat()) v = 0.1 * rng.normal();
        }
        for (auto& m : model.feature_means) m = rng.uniform();

        Window w{Tensor2(T, F), MaskMatrix(T, F, true), 0};
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t f = 0; f < F; ++f) {
                w.values(t, f) = rng.uniform();
                if (rng.uniform() < 0.25) {
                    w.mask.set(t, f, false);
                    w.values(t, f) = std::numeric_limits<double>::quiet_NaN();
                }
            }
        }
        if (w.mask.count_observed() == 0) {
            w.mask.set(0, 0, true);
            w.values(0, 0) = rng.uniform();
        }
        const CorruptionSpec spec{cfg.keep_prob, derive_seed(seed, {0x63727074ULL, i})};
        auto report = grad_check_model(model, w, spec, eps, tolerance, samples, derive_seed(seed, {0x73616d70ULL, i}));
        suite.max_rel_error = std::max(suite.max_rel_error, report.max_rel_error);
        suite.reports.push_back(std::move(report));
    }
    return suite;
}

}  // namespace dynimp
