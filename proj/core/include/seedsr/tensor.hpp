#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seedsr/errors.hpp"

namespace seedsr {

// Dense row-major tensor of 64-bit floats (last axis fastest).
// H,W,C layout keeps per-pixel channel vectors contiguous.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> dims);
    Tensor(std::vector<int> dims, std::vector<double> data);

    static Tensor zeros(std::vector<int> dims) { return Tensor(std::move(dims)); }
    static Tensor full(std::vector<int> dims, double v);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<int>& dims() const { return dims_; }
    int ndim() const { return static_cast<int>(dims_.size()); }
    int dim(int i) const { return dims_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double* raw() { return data_.data(); }
    const double* raw() const { return data_.data(); }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 2D / 3D indexing helpers (row-major).
    double& at(int i, int j) { return data_[static_cast<size_t>(i) * dims_[1] + j]; }
    const double& at(int i, int j) const { return data_[static_cast<size_t>(i) * dims_[1] + j]; }
    double& at(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
    }
    const double& at(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k];
    }
    double& at(int i, int j, int k, int l) {
        return data_[((static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
    }
    const double& at(int i, int j, int k, int l) const {
        return data_[((static_cast<size_t>(i) * dims_[1] + j) * dims_[2] + k) * dims_[3] + l];
    }

    bool same_dims(const Tensor& o) const { return dims_ == o.dims_; }
    Tensor reshaped(std::vector<int> new_dims) const;

    bool all_finite() const;
    std::string shape_str() const;

    // In-place arithmetic on same-shape tensors.
    Tensor& operator+=(const Tensor& o);
    Tensor& operator*=(double s);

private:
    std::vector<int> dims_;
    std::vector<double> data_;
};

std::string shape_str(const std::vector<int>& dims);
int64_t numel_of(const std::vector<int>& dims);

inline void require_same_dims(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_dims(b)) {
        throw ShapeError(std::string(where) + ": dims mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    }
}

double dot(const Tensor& a, const Tensor& b);

}  // namespace seedsr
