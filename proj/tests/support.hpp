#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "dynimp/data_model.hpp"
#include "dynimp/rng.hpp"
#include "dynimp/tensor.hpp"

namespace dynimp::testing {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Window with values on a coarse grid (so distance ties happen) and random holes.
/// Missing cells hold NaN. At least one cell stays observed.
inline Window random_window(Rng& rng, std::size_t T, std::size_t F, double missing_prob, bool grid = true) {
    Window w{Tensor2(T, F), MaskMatrix(T, F, true), 0};
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t f = 0; f < F; ++f) {
            w.values(t, f) = grid ? static_cast<double>(rng.below(5)) * 0.25 : rng.uniform();
            if (rng.uniform() < missing_prob) {
                w.mask.set(t, f, false);
                w.values(t, f) = kNaN;
            }
        }
    }
    if (w.mask.count_observed() == 0) {
        w.mask.set(0, 0, true);
        w.values(0, 0) = 0.5;
    }
    return w;
}

/// Exhaustive kNN estimate of one missing cell: scan every other row that observes f and shares
/// at least one observed feature with row t; pick the k smallest (distance, row) pairs by
/// repeated minimum search; average them in rank order. Falls back to the window column mean.
inline double brute_force_knn_cell(const Tensor2& x, const MaskMatrix& m, std::size_t t, std::size_t f,
                                   std::size_t k) {
    const auto T = x.rows();
    const auto F = x.cols();
    std::vector<double> dist(T, std::numeric_limits<double>::infinity());
    std::vector<bool> eligible(T, false);
    for (std::size_t u = 0; u < T; ++u) {
        if (u == t || !m(u, f)) continue;
        double ss = 0.0;
        std::size_t shared = 0;
        for (std::size_t j = 0; j < F; ++j) {
            if (!(m(t, j) && m(u, j))) continue;
            const double d = x(t, j) - x(u, j);
            ss += d * d;
            ++shared;
        }
        if (shared == 0) continue;
        eligible[u] = true;
        dist[u] = std::sqrt(ss * static_cast<double>(F) / static_cast<double>(shared));
    }
    std::vector<bool> taken(T, false);
    double sum = 0.0;
    std::size_t used = 0;
    for (; used < k; ++used) {
        std::size_t best = T;
        for (std::size_t u = 0; u < T; ++u) {
            if (!eligible[u] || taken[u]) continue;
            if (best == T || dist[u] < dist[best]) best = u;  // strict: lower row index wins ties
        }
        if (best == T) break;
        taken[best] = true;
        sum += x(best, f);
    }
    if (used > 0) return sum / static_cast<double>(used);
    double col = 0.0;
    std::size_t n = 0;
    for (std::size_t u = 0; u < T; ++u) {
        if (m(u, f)) {
            col += x(u, f);
            ++n;
        }
    }
    return n ? col / static_cast<double>(n) : 0.0;
}

/// Central finite difference of f with respect to *p.
inline double central_difference(const std::function<double()>& f, double* p, double eps) {
    const double saved = *p;
    *p = saved + eps;
    const double up = f();
    *p = saved - eps;
    const double down = f();
    *p = saved;
    return (up - down) / (2.0 * eps);
}

inline double rel_err(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / scale;
}

inline bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace dynimp::testing
