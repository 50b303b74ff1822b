#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dynimp/dynimp_model.hpp"
#include "dynimp/imputers.hpp"

// Batch kernels in two flavours. `serial` is the reference; `parallel` spreads
// windows over OpenMP threads and reduces in window order, so both return
// bit-identical results for any thread count.

namespace dynimp {

struct BatchGradient {
    ModelGradients grads;
    double loss_sum = 0.0;
    std::size_t count = 0;  // windows that contributed (those with an observed cell)
};

/// Number of OpenMP threads parallel kernels will use (1 without OpenMP).
int max_threads();
void set_threads(int n);

namespace serial {

BatchGradient batch_gradient(const DynImpModel& model, const std::vector<Window>& windows,
                             std::span<const std::size_t> members, std::size_t epoch);
std::vector<ImputedWindow> impute_all(const std::vector<Window>& windows, ImputerKind kind,
                                      std::span<const double> means, std::size_t k);
std::vector<ImputedWindow> impute_all(const DynImpModel& model, const std::vector<Window>& windows);

}  // namespace serial

namespace parallel {

BatchGradient batch_gradient(const DynImpModel& model, const std::vector<Window>& windows,
                             std::span<const std::size_t> members, std::size_t epoch);
std::vector<ImputedWindow> impute_all(const std::vector<Window>& windows, ImputerKind kind,
                                      std::span<const double> means, std::size_t k);
std::vector<ImputedWindow> impute_all(const DynImpModel& model, const std::vector<Window>& windows);

}  // namespace parallel

}  // namespace dynimp
