#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "common/errors.hpp"

namespace diffcore {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& s);
std::size_t shape_numel(const Shape& s);

// Dense row-major tensor of 64-bit reals. All learned state in the project
// lives in these; there is no view/stride machinery beyond what the blocks
// below need.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);
    Tensor(Shape shape, double fill);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }
    static Tensor from(std::initializer_list<double> v, Shape shape);
    static Tensor identity(std::size_t n);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    void fill(double v);
    void zero() { fill(0.0); }
    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // Throws ShapeError naming both shapes when they differ.
    static void check_same_shape(const Tensor& a, const Tensor& b, const char* where);

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace diffcore
