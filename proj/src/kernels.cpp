#include "dynimp/kernels.hpp"

#include <exception>
#include <optional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dynimp {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

namespace {

struct WindowContribution {
    std::optional<double> loss;
    ModelGradients grads;
};

WindowContribution contribution(const DynImpModel& model, const std::vector<Window>& windows, std::size_t index,
                                std::size_t epoch) {
    WindowContribution c{std::nullopt, ModelGradients(model)};
    c.loss = window_gradient(model, windows[index], training_corruption(model, epoch, index), c.grads);
    return c;
}

BatchGradient reduce(const DynImpModel& model, std::vector<WindowContribution>& parts) {
    BatchGradient out{ModelGradients(model), 0.0, 0};
    for (auto& p : parts) {
        if (!p.loss) continue;
        out.grads.add(p.grads);
        out.loss_sum += *p.loss;
        ++out.count;
    }
    return out;
}

// Runs body(i) for i in [0, n) across threads and rethrows the first failure by index.
template <class Body>
void for_each_index(std::size_t n, Body&& body) {
    std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

namespace serial {

BatchGradient batch_gradient(const DynImpModel& model, const std::vector<Window>& windows,
                             std::span<const std::size_t> members, std::size_t epoch) {
    std::vector<WindowContribution> parts;
    parts.reserve(members.size());
    for (auto idx : members) parts.push_back(contribution(model, windows, idx, epoch));
    return reduce(model, parts);
}

std::vector<ImputedWindow> impute_all(const std::vector<Window>& windows, ImputerKind kind,
                                      std::span<const double> means, std::size_t k) {
    std::vector<ImputedWindow> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(impute(w, kind, means, k));
    return out;
}

std::vector<ImputedWindow> impute_all(const DynImpModel& model, const std::vector<Window>& windows) {
    std::vector<ImputedWindow> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(impute(model, w));
    return out;
}

}  // namespace serial

namespace parallel {

BatchGradient batch_gradient(const DynImpModel& model, const std::vector<Window>& windows,
                             std::span<const std::size_t> members, std::size_t epoch) {
    std::vector<WindowContribution> parts(members.size());
    for_each_index(members.size(), [&](std::size_t i) { parts[i] = contribution(model, windows, members[i], epoch); });
    return reduce(model, parts);
}

std::vector<ImputedWindow> impute_all(const std::vector<Window>& windows, ImputerKind kind,
                                      std::span<const double> means, std::size_t k) {
    std::vector<ImputedWindow> out(windows.size());
    for_each_index(windows.size(), [&](std::size_t i) { out[i] = impute(windows[i], kind, means, k); });
    return out;
}

std::vector<ImputedWindow> impute_all(const DynImpModel& model, const std::vector<Window>& windows) {
    std::vector<ImputedWindow> out(windows.size());
    for_each_index(windows.size(), [&](std::size_t i) { out[i] = impute(model, windows[i]); });
    return out;
}

}  // namespace parallel

}  // namespace dynimp
