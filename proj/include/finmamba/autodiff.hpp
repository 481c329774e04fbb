#pragma once

// Minimal reverse-mode differentiation over dense tensors.
//
// A Tape owns every node created during one forward pass. Ops are coarse
// (a whole linear layer, a whole scan) so the per-node bookkeeping stays
// negligible next to the arithmetic. Nodes are stored in a deque so Var
// handles stay valid while the tape grows.

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "finmamba/tensor.hpp"

namespace finmamba::ad {

struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void(const Tensor&)> backprop;

    /// Gradient buffer, zero-allocated on first touch.
    Tensor& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(Node* node) : node_(node) {}

    const Tensor& value() const { return node_->value; }
    const std::vector<std::size_t>& shape() const { return node_->value.shape(); }
    /// Accumulated gradient; an all-zero tensor if nothing reached this node.
    const Tensor& grad() const;
    bool needs_grad() const { return node_->needs_grad; }
    Node* node() const { return node_; }
    explicit operator bool() const { return node_ != nullptr; }

    /// Scalar value of a one-element node.
    double item() const { return node_->value[0]; }

private:
    Node* node_ = nullptr;
};

class Tape {
public:
    Var constant(Tensor value);
    Var parameter(Tensor value);

    /// Records a derived node. `backprop` receives the output gradient and is
    /// only stored when at least one parent needs a gradient.
    Var record(Tensor value, std::span<const Var> parents, std::function<void(const Tensor&)> backprop);
    Var record(Tensor value, std::initializer_list<Var> parents, std::function<void(const Tensor&)> backprop) {
        return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                      std::move(backprop));
    }

    /// Seeds d(scalar)/d(scalar) = 1 and runs every recorded backprop in reverse.
    void backward(Var scalar);

    std::size_t size() const { return nodes_.size(); }

private:
    std::deque<Node> nodes_;
};

// ---- generic ops -----------------------------------------------------------

/// x[..., in] * W[out, in]^T -> [..., out]
Var linear(Tape& tape, Var x, Var weight);
Var add_bias(Tape& tape, Var x, Var bias);
Var add(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var a, double c);

Var gelu(Tape& tape, Var x);
Var silu(Tape& tape, Var x);
Var softplus(Tape& tape, Var x);
Var sigmoid(Tape& tape, Var x);

/// Concatenates along the last axis; leading axes must agree.
Var concat_last(Tape& tape, std::span<const Var> parts);
/// Mean pooling along axis 1 of [N, L, D] with ceiling semantics for the tail bucket.
Var time_pool(Tape& tape, Var x, std::size_t stride);
/// [N, L, D] -> [N, D] at time L-1.
Var last_step(Tape& tape, Var x);
/// x / sqrt(mean(x^2) + eps) over the last axis.
Var rms_norm(Tape& tape, Var x, double eps = 1e-6);
/// Weighted sum of scalar nodes.
Var weighted_sum(Tape& tape, std::span<const Var> scalars, std::span<const double> weights);

// ---- scalar math shared with plain-tensor code paths ----------------------

double gelu_value(double x);
double gelu_grad(double x);
double sigmoid_value(double x);
double softplus_value(double x);
double silu_value(double x);
double silu_grad(double x);

/// Dense kernels used by both the tape ops and plain forward paths.
void linear_forward(const double* x, std::size_t rows, std::size_t in, const double* w, std::size_t out,
                    double* y);
Tensor linear_apply(const Tensor& x, const Tensor& weight);

}  // namespace finmamba::ad
