#include "finmamba/gatagg.hpp"

#include <array>
#include <cmath>
#include <memory>

#include "finmamba/errors.hpp"
#include "finmamba/kernels.hpp"

namespace finmamba {

namespace {

Tensor uniform(std::mt19937_64& rng, std::vector<std::size_t> shape, double bound) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : t.storage()) v = u(rng);
    return t;
}

struct HeadScores {
    std::vector<double> pooled;  // [N, F]
    std::vector<double> src, dst;
    Tensor alpha;
};

HeadScores head_scores(const Tensor& wh, const Tensor& attn, std::size_t head, const std::vector<unsigned char>& mask) {
    const std::size_t n = wh.dim(0), len = wh.dim(1), f = wh.dim(2);
    if (attn.rank() != 2 || attn.dim(1) != 2 * f || head >= attn.dim(0))
        throw ContractError("attention vector must be [H, 2F]");
    if (mask.size() != n * n) throw ContractError("graph mask does not match node count");
    HeadScores s;
    s.pooled.assign(n * f, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t c = 0; c < f; ++c) s.pooled[i * f + c] += wh(i, l, c) / static_cast<double>(len);
    s.src.assign(n, 0.0);
    s.dst.assign(n, 0.0);
    const double* a = attn.data() + head * 2 * f;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < f; ++c) {
            s.src[i] += a[c] * s.pooled[i * f + c];
            s.dst[i] += a[f + c] * s.pooled[i * f + c];
        }
    s.alpha = kernels::masked_attention(s.src, s.dst, mask, n, kLeakySlope);
    return s;
}

void bind_constants(ad::Tape& tape, const GatParams& params, GatWeights<ad::Var>& w) {
    for (std::size_t g = 0; g < params.layers(); ++g) {
        w.weight.push_back(tape.constant(params.weight[g]));
        w.attn.push_back(tape.constant(params.attn[g]));
        w.out.push_back(tape.constant(params.out[g]));
    }
}

}  // namespace

GatParams init_gat(std::mt19937_64& rng, std::size_t features, std::size_t heads, std::size_t layers) {
    GatParams p;
    const double fan = 1.0 / std::sqrt(static_cast<double>(features));
    for (std::size_t g = 0; g < layers; ++g) {
        p.weight.push_back(uniform(rng, {features, features}, fan));
        p.attn.push_back(uniform(rng, {heads, 2 * features}, 1.0 / std::sqrt(2.0 * static_cast<double>(features))));
        p.out.push_back(uniform(rng, {features, features * heads}, 1.0 / std::sqrt(static_cast<double>(features * heads))));
    }
    return p;
}

std::size_t gat_heads(const GatParams& params) { return params.attn.empty() ? 0 : params.attn.front().dim(0); }

Tensor attention_coefficients(const Tensor& h, const DailyGraph& graph, const GatParams& params, std::size_t head,
                              std::size_t layer) {
    if (layer >= params.layers()) throw ContractError("attention layer out of range");
    const Tensor wh = ad::linear_apply(h, params.weight[layer]);
    return head_scores(wh, params.attn[layer], head, graph.mask).alpha;
}

Tensor aggregate(const Tensor& h, const DailyGraph& graph, const GatParams& params) {
    ad::Tape tape;
    GatWeights<ad::Var> w;
    bind_constants(tape, params, w);
    return gat_forward(tape, tape.constant(h), graph.mask, w).value();
}

StockEmbedding build_embedding(const Tensor& h_raw, const Tensor& z, std::size_t day) {
    if (h_raw.rank() != 3 || !h_raw.same_shape(z)) throw ContractError("embedding inputs must both be [N, L, F]");
    ad::Tape tape;
    const std::array<ad::Var, 2> parts{tape.constant(h_raw), tape.constant(z)};
    return StockEmbedding{ad::concat_last(tape, parts).value(), day};
}

ad::Var head_attention(ad::Tape& tape, ad::Var wh, ad::Var attn, std::size_t head,
                       const std::vector<unsigned char>& mask) {
    HeadScores scores = head_scores(wh.value(), attn.value(), head, mask);
    Tensor out = kernels::attend(scores.alpha, wh.value());
    ad::Node* whn = wh.node();
    ad::Node* an = attn.node();
    auto saved = std::make_shared<HeadScores>(std::move(scores));
    return tape.record(std::move(out), {wh, attn}, [whn, an, head, saved, mask](const Tensor& g) {
        const Tensor& v = whn->value;
        const std::size_t n = v.dim(0), len = v.dim(1), f = v.dim(2), width = len * f;
        const Tensor& alpha = saved->alpha;
        std::vector<double> gsrc(n, 0.0), gdst(n, 0.0);
        Tensor* gwh = whn->needs_grad ? &whn->grad_buffer() : nullptr;
        std::vector<double> galpha(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double* gi = g.data() + i * width;
            double weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                galpha[j] = 0.0;
                if (!mask[i * n + j]) continue;
                const double* vj = v.data() + j * width;
                double acc = 0.0;
                for (std::size_t c = 0; c < width; ++c) acc += gi[c] * vj[c];
                galpha[j] = acc;
                weighted += alpha(i, j) * acc;
                if (gwh) {
                    double* gj = gwh->data() + j * width;
                    const double w = alpha(i, j);
                    for (std::size_t c = 0; c < width; ++c) gj[c] += w * gi[c];
                }
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (!mask[i * n + j]) continue;
                const double ge = alpha(i, j) * (galpha[j] - weighted);
                const double s = saved->src[i] + saved->dst[j];
                const double gs = ge * (s > 0 ? 1.0 : kLeakySlope);
                gsrc[i] += gs;
                gdst[j] += gs;
            }
        }
        const double* a = an->value.data() + head * 2 * f;
        if (an->needs_grad) {
            double* ga = an->grad_buffer().data() + head * 2 * f;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < f; ++c) {
                    ga[c] += gsrc[i] * saved->pooled[i * f + c];
                    ga[f + c] += gdst[i] * saved->pooled[i * f + c];
                }
        }
        if (gwh) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < f; ++c) {
                    const double gp = (gsrc[i] * a[c] + gdst[i] * a[f + c]) / static_cast<double>(len);
                    for (std::size_t l = 0; l < len; ++l) (*gwh)(i, l, c) += gp;
                }
        }
    });
}

ad::Var gat_layer(ad::Tape& tape, ad::Var h, const std::vector<unsigned char>& mask, ad::Var weight, ad::Var attn,
                  ad::Var out) {
    ad::Var wh = ad::linear(tape, h, weight);
    const std::size_t heads = attn.value().dim(0);
    std::vector<ad::Var> per_head;
    per_head.reserve(heads);
    for (std::size_t k = 0; k < heads; ++k) per_head.push_back(head_attention(tape, wh, attn, k, mask));
    ad::Var merged = heads == 1 ? per_head.front() : ad::concat_last(tape, per_head);
    return ad::gelu(tape, ad::linear(tape, merged, out));
}

ad::Var gat_forward(ad::Tape& tape, ad::Var h, const std::vector<unsigned char>& mask,
                    const GatWeights<ad::Var>& w) {
    ad::Var cur = h;
    for (std::size_t g = 0; g < w.layers(); ++g) cur = gat_layer(tape, cur, mask, w.weight[g], w.attn[g], w.out[g]);
    return cur;
}

}  // namespace finmamba
