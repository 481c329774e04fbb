#pragma once

#include <random>
#include <string>
#include <vector>

#include "finmamba/autodiff.hpp"
#include "finmamba/dyngraph.hpp"

namespace finmamba {

inline constexpr double kLeakySlope = 0.2;

/// Per layer: shared feature map W [F, F], one attention vector per head
/// [H, 2F], and the head-merging projection [F, F*H].
template <class T>
struct GatWeights {
    std::vector<T> weight;
    std::vector<T> attn;
    std::vector<T> out;

    std::size_t layers() const { return weight.size(); }

    template <class Self, class F>
    static void each(Self& self, F&& f) {
        for (std::size_t g = 0; g < self.weight.size(); ++g) {
            const std::string p = "gat.layer" + std::to_string(g);
            f(p + ".weight", self.weight[g]);
            f(p + ".attn", self.attn[g]);
            f(p + ".out", self.out[g]);
        }
    }
};

using GatParams = GatWeights<Tensor>;

struct StockEmbedding {
    Tensor p;  // [N, L, 2F]
    std::size_t day = 0;
};

GatParams init_gat(std::mt19937_64& rng, std::size_t features, std::size_t heads, std::size_t layers);
std::size_t gat_heads(const GatParams& params);

/// Attention weights of one head of layer `layer` over the retained edges.
/// Logits use time-pooled W h; rows sum to one.
Tensor attention_coefficients(const Tensor& h, const DailyGraph& graph, const GatParams& params, std::size_t head,
                              std::size_t layer = 0);

/// Stacked multi-head aggregation; returns z with the shape of h.
Tensor aggregate(const Tensor& h, const DailyGraph& graph, const GatParams& params);

StockEmbedding build_embedding(const Tensor& h_raw, const Tensor& z, std::size_t day = 0);

// ---- tape ops ------------------------------------------------------------------

/// One head: alpha from pooled `wh` and row `head` of `attn`, then alpha-weighted
/// sum of `wh` at every time step.
ad::Var head_attention(ad::Tape& tape, ad::Var wh, ad::Var attn, std::size_t head,
                       const std::vector<unsigned char>& mask);

ad::Var gat_layer(ad::Tape& tape, ad::Var h, const std::vector<unsigned char>& mask, ad::Var weight, ad::Var attn,
                  ad::Var out);

ad::Var gat_forward(ad::Tape& tape, ad::Var h, const std::vector<unsigned char>& mask,
                    const GatWeights<ad::Var>& w);

}  // namespace finmamba
