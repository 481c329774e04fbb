#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace finmamba {

/// Dense row-major tensor of doubles. Rank is small (<= 4) everywhere in the
/// pipeline, so the shape lives in a plain vector.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor like(const Tensor& other, double fill = 0.0) { return Tensor(other.shape_, fill); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    /// Row `i` of the leading axis as a contiguous span.
    std::span<double> row(std::size_t i);
    std::span<const double> row(std::size_t i) const;

    void fill(double v);
    Tensor reshaped(std::vector<std::size_t> shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_volume(const std::vector<std::size_t>& shape);

/// Max |a - b| over all elements; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace finmamba
