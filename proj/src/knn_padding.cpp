#include "dynimp/knn_padding.hpp"

#include <stdexcept>

namespace dynimp {

PaddingMatrix build_padding(const Tensor2& values, const MaskMatrix& mask, std::size_t k) {
    return {detail::knn_estimates(values, mask, k)};
}

PaddingMatrix build_padding(const Window& window, std::size_t k) {
    return build_padding(window.values, window.mask, k);
}

Tensor2 masked_combine(const Tensor2& values, const MaskMatrix& mask, const PaddingMatrix& padding) {
    require_same_shape(values, mask, "masked_combine");
    if (!values.same_shape(padding.values)) throw std::invalid_argument("masked_combine: padding shape mismatch");
    Tensor2 out(values.rows(), values.cols());
    for (std::size_t t = 0; t < values.rows(); ++t) {
        for (std::size_t f = 0; f < values.cols(); ++f) {
            // select, not multiply: 0 * NaN would leak unspecified content
            out(t, f) = (mask(t, f) ? values(t, f) : 0.0) + padding.values(t, f);
        }
    }
    return out;
}

Tensor2 masked_combine(const Window& window, const PaddingMatrix& padding) {
    return masked_combine(window.values, window.mask, padding);
}

}  // namespace dynimp
