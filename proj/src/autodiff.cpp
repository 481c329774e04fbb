#include "finmamba/autodiff.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

#include <Eigen/Core>

#include "finmamba/errors.hpp"

namespace finmamba::ad {

Tensor& Node::grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor::like(value);
    return grad;
}

const Tensor& Var::grad() const { return node_->grad_buffer(); }

Var Tape::constant(Tensor value) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    return Var(&n);
}

Var Tape::parameter(Tensor value) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.needs_grad = true;
    return Var(&n);
}

Var Tape::record(Tensor value, std::span<const Var> parents, std::function<void(const Tensor&)> backprop) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    for (const Var& p : parents) n.needs_grad = n.needs_grad || p.needs_grad();
    if (n.needs_grad) n.backprop = std::move(backprop);
    return Var(&n);
}

void Tape::backward(Var scalar) {
    if (scalar.value().size() != 1) throw ContractError("backward() needs a scalar output");
    Node* root = scalar.node();
    root->grad_buffer()[0] += 1.0;
    // Nodes are appended in topological order; walk back from the root.
    bool seen_root = false;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (&*it == root) seen_root = true;
        if (!seen_root || !it->needs_grad || !it->backprop) continue;
        if (it->grad.size() != it->value.size()) continue;  // nothing flowed here
        it->backprop(it->grad);
    }
}

// ---- scalar helpers --------------------------------------------------------

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

double sigmoid_value(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_value(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double silu_value(double x) { return x * sigmoid_value(x); }

double silu_grad(double x) {
    const double s = sigmoid_value(x);
    return s * (1.0 + x * (1.0 - s));
}

// ---- dense kernels ---------------------------------------------------------

namespace {

std::vector<std::size_t> with_last(std::vector<std::size_t> shape, std::size_t last) {
    shape.back() = last;
    return shape;
}

template <class F, class G>
Var unary(Tape& tape, Var x, F f, G df) {
    const Tensor& xv = x.value();
    Tensor y = Tensor::like(xv);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
    Node* xn = x.node();
    return tape.record(std::move(y), {x}, [xn, df](const Tensor& gy) {
        Tensor& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * df(xn->value[i]);
    });
}

}  // namespace

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;

// Copies into an owned, aligned matrix.
RowMatrix owned(const double* p, std::size_t rows, std::size_t cols) {
    return ConstMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void accumulate(double* dst, const RowMatrix& src) {
    const double* s = src.data();
    for (Eigen::Index k = 0; k < src.size(); ++k) dst[k] += s[k];
}

void linear_forward(const double* x, std::size_t rows, std::size_t in, const double* w, std::size_t out,
                    double* y) {
    const RowMatrix prod = owned(x, rows, in) * owned(w, out, in).transpose();
    std::copy(prod.data(), prod.data() + prod.size(), y);
}

Tensor linear_apply(const Tensor& x, const Tensor& weight) {
    const std::size_t in = weight.dim(1), out = weight.dim(0);
    if (x.shape().back() != in) throw ContractError("linear: input width mismatch");
    Tensor y(with_last(x.shape(), out));
    linear_forward(x.data(), x.size() / in, in, weight.data(), out, y.data());
    return y;
}

// ---- ops ---------------------------------------------------------------------

Var linear(Tape& tape, Var x, Var weight) {
    Tensor y = linear_apply(x.value(), weight.value());
    Node* xn = x.node();
    Node* wn = weight.node();
    return tape.record(std::move(y), {x, weight}, [xn, wn](const Tensor& gy) {
        const std::size_t in = wn->value.dim(1), out = wn->value.dim(0);
        const std::size_t rows = xn->value.size() / in;
        const RowMatrix g = owned(gy.data(), rows, out);
        if (xn->needs_grad) accumulate(xn->grad_buffer().data(), g * owned(wn->value.data(), out, in));
        if (wn->needs_grad) accumulate(wn->grad_buffer().data(), g.transpose() * owned(xn->value.data(), rows, in));
    });
}

Var add_bias(Tape& tape, Var x, Var bias) {
    const std::size_t d = bias.value().size();
    if (x.shape().back() != d) throw ContractError("add_bias: width mismatch");
    Tensor y = x.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias.value()[i % d];
    Node* xn = x.node();
    Node* bn = bias.node();
    return tape.record(std::move(y), {x, bias}, [xn, bn, d](const Tensor& gy) {
        if (xn->needs_grad) {
            Tensor& gx = xn->grad_buffer();
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
        }
        if (bn->needs_grad) {
            Tensor& gb = bn->grad_buffer();
            for (std::size_t i = 0; i < gy.size(); ++i) gb[i % d] += gy[i];
        }
    });
}

Var add(Tape& tape, Var a, Var b) {
    if (!a.value().same_shape(b.value())) throw ContractError("add: shape mismatch");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
    Node* an = a.node();
    Node* bn = b.node();
    return tape.record(std::move(y), {a, b}, [an, bn](const Tensor& gy) {
        for (Node* n : {an, bn}) {
            if (!n->needs_grad) continue;
            Tensor& g = n->grad_buffer();
            for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
        }
    });
}

Var mul(Tape& tape, Var a, Var b) {
    if (!a.value().same_shape(b.value())) throw ContractError("mul: shape mismatch");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
    Node* an = a.node();
    Node* bn = b.node();
    return tape.record(std::move(y), {a, b}, [an, bn](const Tensor& gy) {
        if (an->needs_grad) {
            Tensor& g = an->grad_buffer();
            for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * bn->value[i];
        }
        if (bn->needs_grad) {
            Tensor& g = bn->grad_buffer();
            for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * an->value[i];
        }
    });
}

Var scale(Tape& tape, Var a, double c) {
    Tensor y = a.value();
    for (double& v : y.storage()) v *= c;
    Node* an = a.node();
    return tape.record(std::move(y), {a}, [an, c](const Tensor& gy) {
        Tensor& g = an->grad_buffer();
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] += c * gy[i];
    });
}

Var gelu(Tape& tape, Var x) { return unary(tape, x, gelu_value, gelu_grad); }
Var silu(Tape& tape, Var x) { return unary(tape, x, silu_value, silu_grad); }
Var softplus(Tape& tape, Var x) { return unary(tape, x, softplus_value, sigmoid_value); }
Var sigmoid(Tape& tape, Var x) {
    return unary(tape, x, sigmoid_value, [](double v) {
        const double s = sigmoid_value(v);
        return s * (1.0 - s);
    });
}

Var concat_last(Tape& tape, std::span<const Var> parts) {
    if (parts.empty()) throw ContractError("concat_last: no inputs");
    const std::size_t rows = parts[0].value().size() / parts[0].shape().back();
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.value().size() / p.shape().back() != rows) throw ContractError("concat_last: leading axes differ");
        total += p.shape().back();
    }
    Tensor y(with_last(parts[0].shape(), total));
    std::vector<Node*> nodes;
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const std::size_t w = p.shape().back();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) y[r * total + offset + c] = p.value()[r * w + c];
        offset += w;
        nodes.push_back(p.node());
    }
    return tape.record(std::move(y), parts, [nodes, rows, total](const Tensor& gy) {
        std::size_t off = 0;
        for (Node* n : nodes) {
            const std::size_t w = n->value.shape().back();
            if (n->needs_grad) {
                Tensor& g = n->grad_buffer();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < w; ++c) g[r * w + c] += gy[r * total + off + c];
            }
            off += w;
        }
    });
}

Var time_pool(Tape& tape, Var x, std::size_t stride) {
    if (stride == 0) throw ContractError("time_pool: stride must be positive");
    if (stride == 1) return x;
    const std::size_t n = x.value().dim(0), len = x.value().dim(1), d = x.value().dim(2);
    const std::size_t out_len = (len + stride - 1) / stride;
    Tensor y({n, out_len, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t b = 0; b < out_len; ++b) {
            const std::size_t lo = b * stride, hi = std::min(len, lo + stride);
            const double inv = 1.0 / static_cast<double>(hi - lo);
            for (std::size_t t = lo; t < hi; ++t)
                for (std::size_t c = 0; c < d; ++c) y(i, b, c) += x.value()(i, t, c) * inv;
        }
    Node* xn = x.node();
    return tape.record(std::move(y), {x}, [xn, stride, out_len](const Tensor& gy) {
        Tensor& gx = xn->grad_buffer();
        const std::size_t n = gx.dim(0), len = gx.dim(1), d = gx.dim(2);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t b = 0; b < out_len; ++b) {
                const std::size_t lo = b * stride, hi = std::min(len, lo + stride);
                const double inv = 1.0 / static_cast<double>(hi - lo);
                for (std::size_t t = lo; t < hi; ++t)
                    for (std::size_t c = 0; c < d; ++c) gx(i, t, c) += gy(i, b, c) * inv;
            }
    });
}

Var last_step(Tape& tape, Var x) {
    const std::size_t n = x.value().dim(0), len = x.value().dim(1), d = x.value().dim(2);
    Tensor y({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) y(i, c) = x.value()(i, len - 1, c);
    Node* xn = x.node();
    return tape.record(std::move(y), {x}, [xn, n, len, d](const Tensor& gy) {
        Tensor& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < d; ++c) gx(i, len - 1, c) += gy(i, c);
    });
}

Var rms_norm(Tape& tape, Var x, double eps) {
    const std::size_t d = x.shape().back(), rows = x.value().size() / d;
    Tensor y = Tensor::like(x.value());
    auto inv = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = x.value().data() + r * d;
        double ss = 0.0;
        for (std::size_t c = 0; c < d; ++c) ss += in[c] * in[c];
        (*inv)[r] = 1.0 / std::sqrt(ss / static_cast<double>(d) + eps);
        for (std::size_t c = 0; c < d; ++c) y[r * d + c] = in[c] * (*inv)[r];
    }
    Node* xn = x.node();
    auto out = std::make_shared<Tensor>(y);
    return tape.record(std::move(y), {x}, [xn, out, inv, rows, d](const Tensor& gy) {
        if (!xn->needs_grad) return;
        Tensor& gx = xn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += gy[r * d + c] * (*out)[r * d + c];
            dot /= static_cast<double>(d);
            for (std::size_t c = 0; c < d; ++c)
                gx[r * d + c] += (*inv)[r] * (gy[r * d + c] - (*out)[r * d + c] * dot);
        }
    });
}

Var weighted_sum(Tape& tape, std::span<const Var> scalars, std::span<const double> weights) {
    if (scalars.size() != weights.size()) throw ContractError("weighted_sum: size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < scalars.size(); ++i) total += weights[i] * scalars[i].item();
    std::vector<Node*> nodes;
    for (const Var& s : scalars) nodes.push_back(s.node());
    std::vector<double> w(weights.begin(), weights.end());
    return tape.record(Tensor({1}, total), scalars, [nodes, w](const Tensor& gy) {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i]->needs_grad) nodes[i]->grad_buffer()[0] += w[i] * gy[0];
    });
}

}  // namespace finmamba::ad
