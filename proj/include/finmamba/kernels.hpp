#pragma once

// Data-parallel numerical kernels. Each hot kernel has an OpenMP version used
// by the pipeline and a plain serial version kept as the reference the tests
// and the benchmark compare against. Both must produce bitwise-identical
// results: the parallel split is over independent rows, never over a
// floating-point reduction.

#include <cstddef>
#include <span>
#include <vector>

#include "finmamba/tensor.hpp"

namespace finmamba::kernels {

/// Average ranks (1-based) of a series; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> series);

struct SpearmanResult {
    Tensor q;                              // [N, N]
    std::vector<std::size_t> constant_rows;  // series with zero rank variance
};

/// Rank correlation between every pair of rows of `series` ([N, L]).
SpearmanResult spearman_matrix(const Tensor& series);
SpearmanResult spearman_matrix_serial(const Tensor& series);

// ---- selective scan ----------------------------------------------------------
//
// x, delta: [N, L, D]; a: [D, S] (strictly negative); b, c: [N, L, S].
// h_t = exp(delta_t * a) h_{t-1} + delta_t * b_t * x_t ; y_t = <c_t, h_t>.

struct ScanInputs {
    const Tensor& x;
    const Tensor& delta;
    const Tensor& a;
    const Tensor& b;
    const Tensor& c;
};

struct ScanGrads {
    Tensor x, delta, a, b, c;
};

/// Forward scan. When `states` is non-null it receives every hidden state
/// [N, L, D, S] for the backward pass; otherwise only a [D, S] carry per
/// sequence is live.
Tensor selective_scan(const ScanInputs& in, Tensor* states = nullptr);
Tensor selective_scan_serial(const ScanInputs& in);

/// Reverse pass of `selective_scan` given stored states and dL/dy.
ScanGrads selective_scan_backward(const ScanInputs& in, const Tensor& states, const Tensor& grad_y);

/// Bytes of working memory the inference scan keeps live for an [N, L, D] x [D, S] problem.
std::size_t selective_scan_workspace_bytes(std::size_t n, std::size_t len, std::size_t d, std::size_t s);

// ---- graph attention -------------------------------------------------------

/// Softmax over retained neighbours of LeakyReLU(src_i + dst_j), where
/// src = pooled . a[:F] and dst = pooled . a[F:]. Rows sum to one; dropped
/// edges get exactly zero.
Tensor masked_attention(std::span<const double> src, std::span<const double> dst,
                        std::span<const unsigned char> mask, std::size_t n, double negative_slope);
Tensor masked_attention_serial(std::span<const double> src, std::span<const double> dst,
                               std::span<const unsigned char> mask, std::size_t n, double negative_slope);

/// out[i, l, :] = sum_j alpha[i, j] * values[j, l, :]
Tensor attend(const Tensor& alpha, const Tensor& values);
Tensor attend_serial(const Tensor& alpha, const Tensor& values);

// ---- quadratic attention reference (complexity baseline) ---------------------

/// Single-head softmax(x x^T / sqrt(D)) x per sequence of [N, L, D].
Tensor dense_attention(const Tensor& x);
std::size_t dense_attention_workspace_bytes(std::size_t n, std::size_t len, std::size_t d);

}  // namespace finmamba::kernels
