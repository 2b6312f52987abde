#include "diffcore/tensor.hpp"

#include <cmath>
#include <sstream>

namespace diffcore {

std::string shape_to_string(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_)) {
        throw common::ShapeError("tensor data size " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_to_string(shape_));
    }
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor Tensor::from(std::initializer_list<double> v, Shape shape) {
    return Tensor(std::move(shape), std::vector<double>(v));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t.at2(i, i) = 1.0;
    return t;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void Tensor::check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (a.shape() != b.shape()) {
        throw common::ShapeError(std::string(where) + ": shape mismatch " + shape_to_string(a.shape()) +
                                 " vs " + shape_to_string(b.shape()));
    }
}

}  // namespace diffcore
