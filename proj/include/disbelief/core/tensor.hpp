#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "disbelief/core/error.hpp"

namespace disbelief {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major double tensor of rank 0, 1 or 2.
///
/// Rank-1 tensors behave as a single row when an op needs a matrix view,
/// so `rows()`/`cols()` are defined for every rank.
class Tensor {
public:
    Tensor() : shape_{}, data_(1, 0.0) {}

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
        check_rank();
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_rank();
        if (data_.size() != shape_size(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor vector(std::vector<double> v) {
        const auto n = v.size();
        return Tensor(Shape{n}, std::move(v));
    }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        return Tensor(Shape{rows, cols}, std::move(v));
    }
    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(Shape{rows, cols}, 0.0); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }
    std::size_t cols() const noexcept {
        if (shape_.size() == 2) return shape_[1];
        if (shape_.size() == 1) return shape_[0];
        return 1;
    }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }
    double item() const {
        if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
        return data_[0];
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols(), cols()}; }
    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols(), cols()}; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    bool all_finite() const noexcept {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Tensor&) const = default;

private:
    void check_rank() const {
        if (shape_.size() > 2) throw ShapeError("tensors are limited to rank 2, got " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<double> data_;
};

} // namespace disbelief
