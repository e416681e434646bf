#include "seedsr/tensor.hpp"

#include <cmath>
#include <sstream>

namespace seedsr {

int64_t numel_of(const std::vector<int>& dims) {
    int64_t n = 1;
    for (int d : dims) n *= d;
    return n;
}

std::string shape_str(const std::vector<int>& dims) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < dims.size(); ++i) {
        if (i) os << ",";
        os << dims[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
    for (size_t i = 0; i < dims_.size(); ++i) {
        if (dims_[i] <= 0) {
            throw ShapeError("tensor: non-positive extent on axis " + std::to_string(i) + " of " +
                             seedsr::shape_str(dims_));
        }
    }
    data_.assign(static_cast<size_t>(numel_of(dims_)), 0.0);
}

Tensor::Tensor(std::vector<int> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
    if (numel_of(dims_) != static_cast<int64_t>(data_.size())) {
        throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                         " does not match dims " + seedsr::shape_str(dims_));
    }
}

Tensor Tensor::full(std::vector<int> dims, double v) {
    Tensor t(std::move(dims));
    for (auto& x : t.data_) x = v;
    return t;
}

Tensor Tensor::reshaped(std::vector<int> new_dims) const {
    if (numel_of(new_dims) != numel()) {
        throw ShapeError("reshape: " + shape_str() + " -> " + seedsr::shape_str(new_dims) +
                         " changes element count");
    }
    return Tensor(std::move(new_dims), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return seedsr::shape_str(dims_); }

Tensor& Tensor::operator+=(const Tensor& o) {
    require_same_dims(*this, o, "tensor +=");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (auto& x : data_) x *= s;
    return *this;
}

double dot(const Tensor& a, const Tensor& b) {
    require_same_dims(a, b, "dot");
    double s = 0.0;
    const double* pa = a.raw();
    const double* pb = b.raw();
    for (int64_t i = 0; i < a.numel(); ++i) s += pa[i] * pb[i];
    return s;
}

}  // namespace seedsr
