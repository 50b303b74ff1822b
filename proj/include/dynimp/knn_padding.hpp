#pragma once

#include "dynimp/data_model.hpp"
#include "dynimp/imputers.hpp"
#include "dynimp/tensor.hpp"

namespace dynimp {

/// T x F matrix: kNN estimate at missing cells, exactly zero at observed cells.
struct PaddingMatrix {
    Tensor2 values;
};

PaddingMatrix build_padding(const Window& window, std::size_t k = kDefaultNeighbors);
PaddingMatrix build_padding(const Tensor2& values, const MaskMatrix& mask, std::size_t k = kDefaultNeighbors);

/// M (.) x + P. Cells with mask 0 contribute only their padding, whatever x holds there.
Tensor2 masked_combine(const Tensor2& values, const MaskMatrix& mask, const PaddingMatrix& padding);
Tensor2 masked_combine(const Window& window, const PaddingMatrix& padding);

}  // namespace dynimp
