#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynimp/data_model.hpp"
#include "dynimp/imputers.hpp"
#include "dynimp/knn_padding.hpp"
#include "dynimp/neural_core.hpp"

namespace dynimp {

enum class LossMode { bce, mse };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& s);

/// Bernoulli keep-mask corruption: each cell survives with probability keep_prob.
struct CorruptionSpec {
    double keep_prob = 1.0;
    std::uint64_t seed = 0;
};

struct DynImpConfig {
    ImputerKind padding = ImputerKind::knn;
    std::size_t neighbors = kDefaultNeighbors;
    std::size_t hidden = 32;
    double keep_prob = 0.8;
    std::size_t epochs = 100;
    std::size_t batch = 32;
    AdamHyper adam{};
    double clip_norm = 5.0;
    LossMode loss = LossMode::bce;
    /// Run per-window gradients of a batch with OpenMP.
    bool parallel = true;

    void validate() const;
};

/// LSTM encoder over the padded input plus a per-step dense decoder back to F channels.
struct DynImpModel {
    LstmParams encoder;
    DenseParams decoder;
    DynImpConfig config;
    /// Scaled-space feature means of the training data; the "mean" padding strategy and
    /// the fallback for windows with nothing observed.
    std::vector<double> feature_means;
    std::uint64_t seed = 0;
    std::size_t epochs_completed = 0;
    AdamState optimizer;

    std::size_t num_features() const { return decoder.output_size(); }
    Activation output_activation() const {
        return config.loss == LossMode::bce ? Activation::sigmoid : Activation::identity;
    }
    std::vector<Tensor2*> tensors() {
        return {&encoder.w_input, &encoder.w_recurrent, &encoder.bias, &decoder.weight, &decoder.bias};
    }
    std::vector<const Tensor2*> tensors() const {
        return {&encoder.w_input, &encoder.w_recurrent, &encoder.bias, &decoder.weight, &decoder.bias};
    }
};

/// Fresh model with fan-in uniform weights and forget bias 1.
DynImpModel make_model(std::size_t num_features, const DynImpConfig& config, std::uint64_t seed);

struct ModelGradients {
    LstmParams encoder;
    DenseParams decoder;

    ModelGradients() = default;
    explicit ModelGradients(const DynImpModel& m)
        : encoder(m.encoder.input_size(), m.encoder.hidden_size()),
          decoder(m.decoder.input_size(), m.decoder.output_size()) {}

    std::vector<Tensor2*> tensors() {
        return {&encoder.w_input, &encoder.w_recurrent, &encoder.bias, &decoder.weight, &decoder.bias};
    }
    std::vector<const Tensor2*> tensors() const {
        return {&encoder.w_input, &encoder.w_recurrent, &encoder.bias, &decoder.weight, &decoder.bias};
    }
    void add(const ModelGradients& other);
    void scale(double s);
};

struct Corrupted {
    Tensor2 values;
    MaskMatrix effective_mask;
};

/// x~ = r (.) x with r ~ Bernoulli(keep_prob) per cell; dropped cells become missing.
Corrupted corrupt(const Tensor2& x, const MaskMatrix& mask, const CorruptionSpec& spec);

/// Padding matrix for the configured strategy (zero at observed cells).
PaddingMatrix strategy_padding(const DynImpModel& model, const Tensor2& values, const MaskMatrix& mask);

struct ForwardPass {
    Corrupted corrupted;
    Tensor2 input;  // M (.) x~ + P
    LstmSequence encoded;
    Tensor2 reconstruction;  // T x F
};

/// corrupt -> pad on the effective mask -> masked combine -> LSTM -> per-step decode.
ForwardPass forward(const DynImpModel& model, const Window& window, const CorruptionSpec& spec);

/// Mean reconstruction loss over cells with train_mask = 1. bce clamps z to [1e-7, 1 - 1e-7].
double reconstruction_loss(const Tensor2& z, const Tensor2& x, const MaskMatrix& train_mask, LossMode mode);
Tensor2 reconstruction_loss_grad(const Tensor2& z, const Tensor2& x, const MaskMatrix& train_mask, LossMode mode);

/// Forward + backward for one window; adds into `grads` and returns the loss.
/// Returns nullopt (and leaves grads untouched) when the window has no observed cell.
std::optional<double> window_gradient(const DynImpModel& model, const Window& window, const CorruptionSpec& spec,
                                      ModelGradients& grads);

/// Corruption stream for (training seed, epoch, window index).
CorruptionSpec training_corruption(const DynImpModel& model, std::size_t epoch, std::size_t window_index);

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t epoch, std::size_t batch)
        : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch)),
          epoch_(epoch),
          batch_(batch) {}
    std::size_t epoch() const { return epoch_; }
    std::size_t batch() const { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

struct EpochReport {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
};

/// Runs config.epochs further epochs of mini-batch Adam on scaled windows.
/// Appends one entry per epoch to the returned log.
std::vector<EpochReport> train(DynImpModel& model, const std::vector<Window>& windows,
                               const std::function<void(const EpochReport&)>& on_epoch = {});

/// Inference without corruption: observed cells pass through, missing cells take the reconstruction.
ImputedWindow impute(const DynImpModel& model, const Window& window);

/// Full-pipeline gradient check on one window with frozen corruption.
GradCheckReport grad_check_model(DynImpModel& model, const Window& window, const CorruptionSpec& spec, double eps,
                                 double tolerance, std::size_t samples, std::uint64_t sample_seed);

struct GradCheckSuite {
    std::vector<GradCheckReport> reports;
    double max_rel_error = 0.0;
    bool passed() const;
};

/// Gradient check of the full pipeline on random small instances (T <= 5, F <= 3, H <= 4)
/// with partially missing windows in [0, 1]. `base` supplies padding, loss and keep_prob;
/// samples = 0 checks every parameter.
GradCheckSuite grad_check_random_instances(std::size_t instances, const DynImpConfig& base, double eps,
                                           double tolerance, std::size_t samples, std::uint64_t seed);

}  // namespace dynimp
