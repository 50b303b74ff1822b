#pragma once

#include <span>
#include <string>
#include <vector>

#include "dynimp/data_model.hpp"
#include "dynimp/tensor.hpp"

namespace dynimp {

struct ImputedWindow {
    Tensor2 values;  // fully finite
    MaskMatrix source_mask;
};

enum class ImputerKind { zero, mean, interp, knn };

std::string to_string(ImputerKind kind);
ImputerKind parse_imputer_kind(const std::string& s);

inline constexpr std::size_t kDefaultNeighbors = 5;

ImputedWindow impute_zero(const Window& window);

/// `means` are dataset-level per-feature means of observed training cells.
ImputedWindow impute_filled_mean(const Window& window, std::span<const double> means);

/// Linear interpolation along time per feature; edges extend the nearest observation,
/// fully missing columns become 0.
ImputedWindow impute_interpolation(const Window& window);

/// Row-wise kNN over time points using the partial Euclidean distance
/// sqrt(F / n_co * sum over co-observed features). Throws if the window has no observed cell.
ImputedWindow impute_knn(const Window& window, std::size_t k = kDefaultNeighbors);

/// Dispatch by kind; `means` is only read by ImputerKind::mean.
ImputedWindow impute(const Window& window, ImputerKind kind, std::span<const double> means, std::size_t k);

/// T x 2F: imputed values followed by was-missing flags (1 = missing).
Tensor2 augment_indicator(const ImputedWindow& window);

namespace detail {

/// Estimate for every missing cell of a window (zero at observed cells).
/// Shared by impute_knn and build_padding.
Tensor2 knn_estimates(const Tensor2& values, const MaskMatrix& mask, std::size_t k);

Tensor2 interpolation_estimates(const Tensor2& values, const MaskMatrix& mask);

}  // namespace detail

}  // namespace dynimp
