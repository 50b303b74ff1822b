#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dynimp {

/// Dense row-major matrix of doubles.
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("Tensor2: data length " + std::to_string(data_.size()) +
                                        " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    bool same_shape(const Tensor2& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    friend bool operator==(const Tensor2&, const Tensor2&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Binary T x F matrix; 1 = observed, 0 = missing.
class MaskMatrix {
public:
    MaskMatrix() = default;
    MaskMatrix(std::size_t rows, std::size_t cols, bool observed = true)
        : rows_(rows), cols_(cols), bits_(rows * cols, observed ? 1 : 0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
    void set(std::size_t r, std::size_t c, bool observed) { bits_[r * cols_ + c] = observed ? 1 : 0; }

    std::size_t count_observed() const {
        std::size_t n = 0;
        for (auto b : bits_) n += b;
        return n;
    }
    std::size_t count_missing() const { return bits_.size() - count_observed(); }
    bool all_observed() const { return count_observed() == bits_.size(); }

    std::span<const std::uint8_t> bits() const { return bits_; }

    friend bool operator==(const MaskMatrix&, const MaskMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> bits_;
};

inline void require_same_shape(const Tensor2& a, const MaskMatrix& m, const char* what) {
    if (a.rows() != m.rows() || a.cols() != m.cols()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs mask " + std::to_string(m.rows()) + "x" +
                                    std::to_string(m.cols()) + ")");
    }
}

}  // namespace dynimp

namespace dynimp {

/// Bit-level equality; treats identical NaN payloads as equal.
inline bool bitwise_equal(const Tensor2& a, const Tensor2& b) {
    return a.same_shape(b) &&
           (a.size() == 0 || std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0);
}

}  // namespace dynimp
