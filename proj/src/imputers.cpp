#include "dynimp/imputers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dynimp {

std::string to_string(ImputerKind kind) {
    switch (kind) {
        case ImputerKind::zero: return "zero";
        case ImputerKind::mean: return "mean";
        case ImputerKind::interp: return "interp";
        case ImputerKind::knn: return "knn";
    }
    return "zero";
}

ImputerKind parse_imputer_kind(const std::string& s) {
    if (s == "zero") return ImputerKind::zero;
    if (s == "mean") return ImputerKind::mean;
    if (s == "interp") return ImputerKind::interp;
    if (s == "knn") return ImputerKind::knn;
    throw std::invalid_argument("unknown imputer '" + s + "' (expected zero | mean | interp | knn)");
}

namespace {

ImputedWindow fill_missing(const Window& w, const Tensor2& estimates) {
    require_same_shape(w.values, w.mask, "impute");
    ImputedWindow out{w.values, w.mask};
    for (std::size_t t = 0; t < w.length(); ++t) {
        for (std::size_t f = 0; f < w.features(); ++f) {
            if (!w.mask(t, f)) out.values(t, f) = estimates(t, f);
        }
    }
    return out;
}

}  // namespace

namespace detail {

Tensor2 knn_estimates(const Tensor2& values, const MaskMatrix& mask, std::size_t k) {
    require_same_shape(values, mask, "knn");
    if (k < 1) throw std::invalid_argument("kNN neighbor count must be >= 1");
    const auto T = values.rows();
    const auto F = values.cols();
    Tensor2 est(T, F, 0.0);
    if (mask.all_observed()) return est;
    if (mask.count_observed() == 0) throw std::invalid_argument("kNN imputation needs at least one observed cell");

    // Within-window fallback when no neighbor row observes the feature.
    std::vector<double> col_mean(F, 0.0);
    for (std::size_t f = 0; f < F; ++f) {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t t = 0; t < T; ++t) {
            if (mask(t, f)) {
                s += values(t, f);
                ++n;
            }
        }
        col_mean[f] = n ? s / static_cast<double>(n) : 0.0;
    }

    struct Neighbor {
        double dist;
        std::size_t row;
    };
    std::vector<Neighbor> cands;
    cands.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        bool any_missing = false;
        for (std::size_t f = 0; f < F && !any_missing; ++f) any_missing = !mask(t, f);
        if (!any_missing) continue;

        cands.clear();
        for (std::size_t u = 0; u < T; ++u) {
            if (u == t) continue;
            double ss = 0.0;
            std::size_t co = 0;
            for (std::size_t f = 0; f < F; ++f) {
                if (mask(t, f) && mask(u, f)) {
                    const double d = values(t, f) - values(u, f);
                    ss += d * d;
                    ++co;
                }
            }
            if (co == 0) continue;
            cands.push_back({std::sqrt(ss * static_cast<double>(F) / static_cast<double>(co)), u});
        }
        std::sort(cands.begin(), cands.end(), [](const Neighbor& a, const Neighbor& b) {
            return a.dist < b.dist || (a.dist == b.dist && a.row < b.row);
        });

        for (std::size_t f = 0; f < F; ++f) {
            if (mask(t, f)) continue;
            double sum = 0.0;
            std::size_t used = 0;
            for (const auto& c : cands) {
                if (!mask(c.row, f)) continue;
                sum += values(c.row, f);
                if (++used == k) break;
            }
            est(t, f) = used ? sum / static_cast<double>(used) : col_mean[f];
        }
    }
    return est;
}

Tensor2 interpolation_estimates(const Tensor2& values, const MaskMatrix& mask) {
    require_same_shape(values, mask, "interpolation");
    const auto T = values.rows();
    const auto F = values.cols();
    Tensor2 est(T, F, 0.0);
    std::vector<std::size_t> obs;
    for (std::size_t f = 0; f < F; ++f) {
        obs.clear();
        for (std::size_t t = 0; t < T; ++t) {
            if (mask(t, f)) obs.push_back(t);
        }
        if (obs.empty()) continue;
        std::size_t next = 0;  // index into obs of first observation at or after t
        for (std::size_t t = 0; t < T; ++t) {
            while (next < obs.size() && obs[next] < t) ++next;
            if (mask(t, f)) continue;
            if (next == 0) {
                est(t, f) = values(obs.front(), f);
            } else if (next == obs.size()) {
                est(t, f) = values(obs.back(), f);
            } else {
                const auto a = obs[next - 1];
                const auto b = obs[next];
                const double xa = values(a, f);
                const double xb = values(b, f);
                est(t, f) = xa + (xb - xa) * static_cast<double>(t - a) / static_cast<double>(b - a);
            }
        }
    }
    return est;
}

}  // namespace detail

ImputedWindow impute_zero(const Window& window) {
    return fill_missing(window, Tensor2(window.length(), window.features(), 0.0));
}

ImputedWindow impute_filled_mean(const Window& window, std::span<const double> means) {
    if (means.size() != window.features()) {
        throw std::invalid_argument("filled-mean imputer: " + std::to_string(means.size()) + " means for " +
                                    std::to_string(window.features()) + " features");
    }
    Tensor2 est(window.length(), window.features());
    for (std::size_t t = 0; t < window.length(); ++t) {
        for (std::size_t f = 0; f < window.features(); ++f) est(t, f) = means[f];
    }
    return fill_missing(window, est);
}

ImputedWindow impute_interpolation(const Window& window) {
    return fill_missing(window, detail::interpolation_estimates(window.values, window.mask));
}

ImputedWindow impute_knn(const Window& window, std::size_t k) {
    return fill_missing(window, detail::knn_estimates(window.values, window.mask, k));
}

ImputedWindow impute(const Window& window, ImputerKind kind, std::span<const double> means, std::size_t k) {
    switch (kind) {
        case ImputerKind::zero: return impute_zero(window);
        case ImputerKind::mean: return impute_filled_mean(window, means);
        case ImputerKind::interp: return impute_interpolation(window);
        case ImputerKind::knn: return impute_knn(window, k);
    }
    throw std::logic_error("unhandled imputer kind");
}

Tensor2 augment_indicator(const ImputedWindow& window) {
    const auto T = window.values.rows();
    const auto F = window.values.cols();
    Tensor2 out(T, 2 * F, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t f = 0; f < F; ++f) {
            out(t, f) = window.values(t, f);
            out(t, F + f) = window.source_mask(t, f) ? 0.0 : 1.0;
        }
    }
    return out;
}

}  // namespace dynimp
