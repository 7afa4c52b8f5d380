#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "jscc/error.hpp"

namespace jscc::nn {

/// Dense row-major array of doubles. Rank-2 tensors are (batch x features);
/// most layers operate on those.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != data_.size()) {
            throw DimensionError("tensor data size " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string());
        }
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor({rows, cols}, fill);
    }

    static Tensor row(std::initializer_list<double> values) {
        return Tensor({1, values.size()}, std::vector<double>(values));
    }

    static Tensor vector(std::initializer_list<double> values) {
        return Tensor({values.size()}, std::vector<double>(values));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    /// Leading dimension for rank-2, 1 for rank-1.
    std::size_t rows() const {
        if (shape_.size() == 2) return shape_[0];
        return shape_.empty() ? 0 : 1;
    }
    /// Trailing (feature) dimension.
    std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row_span(std::size_t r) const {
        return {data_.data() + r * cols(), cols()};
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::string shape_string() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

    Tensor& operator+=(const Tensor& other) {
        require_same_shape(other, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    Tensor& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }

    void require_same_shape(const Tensor& other, const char* what) const {
        if (!same_shape(other)) {
            throw DimensionError(std::string(what) + ": shape " + shape_string() + " vs " +
                                 other.shape_string());
        }
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<std::size_t>());
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// Horizontal concatenation of two (batch x f) tensors.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("concat_cols: row count " + std::to_string(a.rows()) + " vs " +
                             std::to_string(b.rows()));
    }
    const std::size_t ca = a.cols(), cb = b.cols();
    Tensor out = Tensor::matrix(a.rows(), ca + cb);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        std::copy_n(a.row_span(r).begin(), ca, out.row_span(r).begin());
        std::copy_n(b.row_span(r).begin(), cb, out.row_span(r).begin() + ca);
    }
    return out;
}

/// Columns [begin, begin+width) of a rank-2 tensor.
inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t width) {
    if (begin + width > a.cols()) {
        throw DimensionError("slice_cols: range exceeds " + std::to_string(a.cols()) + " columns");
    }
    Tensor out = Tensor::matrix(a.rows(), width);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        std::copy_n(a.row_span(r).begin() + begin, width, out.row_span(r).begin());
    }
    return out;
}

} // namespace jscc::nn
