#include "finmamba/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace finmamba {

std::size_t shape_volume(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_volume(shape_)) {
        throw std::invalid_argument("tensor data does not match shape volume");
    }
}

std::span<double> Tensor::row(std::size_t i) {
    const std::size_t stride = shape_.empty() ? 1 : data_.size() / shape_[0];
    return std::span<double>(data_).subspan(i * stride, stride);
}

std::span<const double> Tensor::row(std::size_t i) const {
    const std::size_t stride = shape_.empty() ? 1 : data_.size() / shape_[0];
    return std::span<const double>(data_).subspan(i * stride, stride);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    if (shape_volume(shape) != data_.size()) {
        throw std::invalid_argument("reshape changes element count");
    }
    return Tensor(std::move(shape), data_);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace finmamba
