#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dynimp/data_model.hpp"
#include "dynimp/dynimp_model.hpp"
#include "dynimp/imputers.hpp"

namespace dynimp {

// ---------------------------------------------------------------------------
// Downstream classifier

struct ClassifierHyper {
    std::size_t iterations = 400;
    double lr = 0.05;
    double l2 = 1e-3;
    std::uint64_t seed = 0;
};

/// Per-column mean and population standard deviation over time: 2 * cols values.
std::vector<double> pooled_features(const Tensor2& window);

/// Multinomial logistic regression over standardized pooled window features.
struct ClassifierModel {
    Tensor2 weights;  // L x P
    Tensor2 bias;     // L x 1
    std::vector<double> feature_mean;
    std::vector<double> feature_scale;

    std::size_t num_classes() const { return weights.rows(); }
    std::vector<double> probabilities(const Tensor2& window) const;
    int predict(const Tensor2& window) const;
};

/// Full-batch Adam on the softmax cross-entropy. Throws if a class in [0, L) has no training window.
ClassifierModel train_classifier(const std::vector<Tensor2>& inputs, std::span<const int> labels,
                                 std::size_t num_classes, const ClassifierHyper& hyper = {},
                                 const std::vector<std::string>& class_names = {});

/// Mean recall over the classes that occur in `truth`.
double balanced_accuracy(std::span<const int> predictions, std::span<const int> truth, std::size_t num_classes);

/// RMSE over the cells recorded in `ground`, indexed by window position in `imputed`.
double imputation_rmse(const std::vector<ImputedWindow>& imputed, const GroundTruthStore& ground);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Per-class shuffle and cut at train_fraction; every class with >= 2 windows lands in both parts.
Split stratified_split(std::span<const int> labels, std::size_t num_classes, double train_fraction,
                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiment matrix

/// zero | mean | interp | knn | indicator | dynimp-zero | dynimp-mean | dynimp-interp | dynimp-knn
struct MethodSpec {
    std::string name;
    ImputerKind imputer = ImputerKind::mean;
    bool dynimp = false;
    bool indicator = false;
};

MethodSpec parse_method(const std::string& name);
const std::vector<std::string>& all_method_names();

enum class LabelMode { movement4, combined16 };
std::string to_string(LabelMode mode);
LabelMode parse_label_mode(const std::string& s);

struct ExperimentConfig {
    std::vector<std::string> methods;
    std::vector<double> levels;
    std::vector<std::uint64_t> seeds;
    DynImpConfig dynimp;
    ClassifierHyper classifier;
    std::size_t neighbors = kDefaultNeighbors;
    double train_fraction = 0.8;
    ScalingMode scaling = ScalingMode::minmax;
    LabelMode labels = LabelMode::movement4;
    int jobs = 1;

    void validate() const;
};

struct ExperimentResult {
    std::string method;
    double level = 0.0;
    std::uint64_t seed = 0;
    double balanced_accuracy = 0.0;  // NaN on error
    double rmse = 0.0;               // NaN when no ground truth
    std::string error;               // empty on success
};

struct AggregateResult {
    std::string method;
    double level = 0.0;
    double mean_ba = 0.0;
    double ci_half_width = 0.0;
    std::size_t seeds = 0;  // successful seeds
    double min_ba = 0.0;
    double max_ba = 0.0;
};

struct ExperimentOutput {
    std::vector<ExperimentResult> results;  // level-major, then seed, then method
    std::vector<AggregateResult> aggregates;  // method-major, then level
    std::size_t failed_cells() const;
};

/// Prepared inputs for one (level, seed) cell: scaled split data with injected missingness.
struct CellData {
    Dataset dataset;  // scaled, with injected missingness
    GroundTruthStore truth;
    Split split;
    std::vector<double> train_means;
};

/// Labels remapped by `mode` and compacted onto the classes that occur.
Dataset prepare_labels(const Dataset& raw, LabelMode mode);

CellData prepare_cell(const Dataset& labeled, const ExperimentConfig& config, double level, std::uint64_t seed);

/// Imputes every window of the cell with `method`; DynImp variants train on the train split first.
std::vector<ImputedWindow> impute_cell(const CellData& cell, const MethodSpec& method,
                                       const ExperimentConfig& config, double level, std::uint64_t seed);

ExperimentResult evaluate_method(const CellData& cell, const MethodSpec& method, const ExperimentConfig& config,
                                 double level, std::uint64_t seed);

ExperimentOutput run_experiment(const Dataset& dataset, const ExperimentConfig& config);

/// Mean and normal-approximation 95% half-width 1.96 * s / sqrt(n) over successful seeds.
std::vector<AggregateResult> aggregate(const std::vector<ExperimentResult>& results,
                                       const std::vector<std::string>& methods, const std::vector<double>& levels);

void write_results_csv(std::ostream& os, const std::vector<ExperimentResult>& results);
void write_aggregate_csv(std::ostream& os, const std::vector<AggregateResult>& aggregates);
/// Rows = levels, two columns (mean, ci) per method.
void write_table1_csv(std::ostream& os, const std::vector<AggregateResult>& aggregates,
                      const std::vector<std::string>& methods, const std::vector<double>& levels);
/// Rows = DynImp padding variants, one column per level.
void write_table2_csv(std::ostream& os, const std::vector<AggregateResult>& aggregates,
                      const std::vector<std::string>& methods, const std::vector<double>& levels);

/// Published reference points kept for report footers (ExtraSensory, 60% missingness).
struct ReferencePoint {
    const char* method;
    double level;
    double mean_ba;
    double ci_half_width;
};
inline constexpr ReferencePoint kPublishedReference[] = {
    {"mean", 0.6, 0.7043, 0.0085},
    {"dynimp-knn", 0.6, 0.8304, 0.0070},
};

}  // namespace dynimp
