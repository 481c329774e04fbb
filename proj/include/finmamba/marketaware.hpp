#pragma once

#include <array>
#include <random>
#include <string>

#include "finmamba/autodiff.hpp"
#include "finmamba/dyngraph.hpp"
#include "finmamba/panel.hpp"

namespace finmamba {

/// Multi-scale convolution over the [L, F] market-index plane: three
/// same-padded branches (1x1, 3x3, 5x5), GELU, global average pool, then a
/// scalar projection. Templated on the storage so the same layout serves
/// plain tensors and tape variables.
template <class T>
struct SparsifierWeights {
    static constexpr std::array<std::size_t, 3> kKernelSizes{1, 3, 5};
    std::array<T, 3> kernel;  // [C, k, k]
    std::array<T, 3> bias;    // [C]
    T proj;                   // [1, 3C]
    T proj_bias;              // [1]

    template <class Self, class F>
    static void each(Self& self, F&& f) {
        for (std::size_t b = 0; b < 3; ++b) {
            const std::string k = std::to_string(kKernelSizes[b]);
            f("sparsifier.branch" + k + "x" + k + ".kernel", self.kernel[b]);
            f("sparsifier.branch" + k + "x" + k + ".bias", self.bias[b]);
        }
        f(std::string("sparsifier.proj.weight"), self.proj);
        f(std::string("sparsifier.proj.bias"), self.proj_bias);
    }
};

using SparsifierParams = SparsifierWeights<Tensor>;

SparsifierParams init_sparsifier(std::mt19937_64& rng, std::size_t channels = 4);

/// [L, F] input, [C, k, k] kernel, [C] bias -> [C, L, F], zero padding.
ad::Var conv2d_same(ad::Tape& tape, ad::Var plane, ad::Var kernel, ad::Var bias);
/// Mean over every axis but the first.
ad::Var global_avg_pool(ad::Tape& tape, ad::Var x);

/// Pre-sigmoid logit of the inception block.
ad::Var sparsity_logit(ad::Tape& tape, ad::Var plane, const SparsifierWeights<ad::Var>& w);
/// kappa = tau * sigmoid(logit); `plane` is the [L, F] market index.
ad::Var sparsity_level(ad::Tape& tape, ad::Var plane, const SparsifierWeights<ad::Var>& w, double tau);
double sparsity_level(const MarketIndexWindow& m, const SparsifierParams& params, double tau);

/// Number of off-diagonal edges kept for retention ratio kappa.
std::size_t retained_edge_budget(double kappa, std::size_t nodes);

/// Keeps the ceil(kappa * N(N-1)) heaviest off-diagonal edges (ties by
/// ascending (i, j)) plus every self-edge.
DailyGraph sparsify(const Tensor& adjacency, double kappa, std::size_t day = 0);

}  // namespace finmamba
