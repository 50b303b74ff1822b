#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dynimp/tensor.hpp"

namespace dynimp {

/// One 1-minute group of sensor samples.
struct SensorFrame {
    std::int64_t timestamp = 0;
    std::vector<double> features;
    std::vector<std::uint8_t> observed;  // parallel to features; 1 = observed
    std::optional<int> label_id;
};

struct Window {
    Tensor2 values;   // T x F; content at mask = 0 is unspecified
    MaskMatrix mask;
    int label_id = 0;

    std::size_t length() const { return values.rows(); }
    std::size_t features() const { return values.cols(); }
};

enum class ScalingMode { none, minmax, zscore };

std::string to_string(ScalingMode mode);
ScalingMode parse_scaling_mode(const std::string& s);

/// Per-feature affine scaling fitted on observed cells.
///
/// minmax: location = min, spread = max - min, constant features map to 0.5.
/// zscore: location = mean, spread = population std, constant features map to 0.
struct ScalingParams {
    ScalingMode mode = ScalingMode::none;
    std::vector<double> location;
    std::vector<double> spread;
    std::vector<std::uint8_t> constant;

    double scale(std::size_t f, double v) const;
    double unscale(std::size_t f, double v) const;

    friend bool operator==(const ScalingParams&, const ScalingParams&) = default;
};

struct Dataset {
    std::vector<Window> windows;
    ScalingParams scaling;  // mode none while values are in raw units
    std::vector<std::string> feature_names;
    std::vector<std::string> label_names;
    std::size_t window_length = 24;

    std::size_t num_features() const { return feature_names.size(); }
    std::size_t num_labels() const { return label_names.size(); }

    /// Throws if any window disagrees with the declared T, F or label count.
    void validate() const;
};

/// Original values of cells hidden by inject_missingness.
struct GroundTruthCell {
    std::size_t window = 0;
    std::size_t t = 0;
    std::size_t f = 0;
    double value = 0.0;
};
using GroundTruthStore = std::vector<GroundTruthCell>;

struct CsvSchema {
    std::string timestamp_column = "timestamp";
    std::string label_column = "label";
    /// Empty: every column other than timestamp and label, in file order.
    std::vector<std::string> feature_columns;
    /// Empty: sorted set of labels found in the file.
    std::vector<std::string> known_labels;
    std::size_t window_length = 24;
    std::size_t stride = 0;  // 0 = window_length
    std::int64_t bin_seconds = 60;
};

/// Reads `timestamp,<features...>,label` CSV, bins rows into 1-minute frames and windows them.
Dataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

/// Minute-binning step of ingest_csv, exposed for testing.
std::vector<SensorFrame> bin_frames(const std::vector<SensorFrame>& samples, std::int64_t bin_seconds,
                                    std::size_t num_labels);

std::vector<Window> build_windows(const std::vector<SensorFrame>& frames, std::size_t T, std::size_t stride);

inline std::size_t expected_window_count(std::size_t n, std::size_t T, std::size_t stride) {
    return n < T ? 0 : (n - T) / stride + 1;
}

ScalingParams fit_scaling(const Dataset& dataset, ScalingMode mode);
ScalingParams fit_scaling(const std::vector<Window>& windows, const std::vector<std::string>& feature_names,
                          ScalingMode mode);

/// Scales observed cells. With clip_unit, minmax output is clamped to [0, 1]
/// (used when parameters were fitted on a subset of the data).
void apply_scaling(Dataset& dataset, const ScalingParams& params, bool clip_unit = false);
void apply_scaling(Window& window, const ScalingParams& params, bool clip_unit = false);
void remove_scaling(Dataset& dataset);

/// Per-feature mean of observed cells across windows.
std::vector<double> observed_feature_means(const std::vector<Window>& windows);

/// Hides each observed cell with probability `level`; returns the new dataset and the hidden originals.
std::pair<Dataset, GroundTruthStore> inject_missingness(const Dataset& dataset, double level, std::uint64_t seed);

struct SyntheticSpec {
    std::size_t users = 4;
    std::size_t minutes = 1440;
    std::size_t features = 8;
    double coupling = 0.9;
    std::uint64_t seed = 1;
    std::size_t window_length = 24;
    std::size_t stride = 0;  // 0 = window_length
};

/// Raw per-user frame streams, before windowing.
std::vector<std::vector<SensorFrame>> generate_synthetic_frames(const SyntheticSpec& spec);

/// Correlated-channel activity dataset. Labels are "<movement>|<location>" (16 combined classes).
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Movement part of a combined "<movement>|<location>" label.
std::string movement_of(const std::string& combined_label);

/// Relabels a combined-label dataset onto its distinct movement prefixes.
Dataset collapse_to_movement(const Dataset& dataset);

double pearson_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace dynimp
