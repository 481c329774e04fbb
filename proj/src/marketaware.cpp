#include "finmamba/marketaware.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "finmamba/errors.hpp"

namespace finmamba {

namespace {

Tensor uniform(std::mt19937_64& rng, std::vector<std::size_t> shape, double bound) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : t.storage()) v = u(rng);
    return t;
}

}  // namespace

SparsifierParams init_sparsifier(std::mt19937_64& rng, std::size_t channels) {
    SparsifierParams p;
    for (std::size_t b = 0; b < 3; ++b) {
        const std::size_t k = SparsifierParams::kKernelSizes[b];
        const double bound = 1.0 / static_cast<double>(k);  // fan-in k*k
        p.kernel[b] = uniform(rng, {channels, k, k}, bound);
        p.bias[b] = uniform(rng, {channels}, bound);
    }
    const double bound = 1.0 / std::sqrt(3.0 * static_cast<double>(channels));
    p.proj = uniform(rng, {1, 3 * channels}, bound);
    p.proj_bias = Tensor({1});
    return p;
}

ad::Var conv2d_same(ad::Tape& tape, ad::Var plane, ad::Var kernel, ad::Var bias) {
    const Tensor& in = plane.value();
    const Tensor& ker = kernel.value();
    if (in.rank() != 2 || ker.rank() != 3 || ker.dim(1) != ker.dim(2) || ker.dim(1) % 2 == 0)
        throw ContractError("conv2d_same: expects [L, F] input and odd square [C, k, k] kernel");
    const std::size_t rows = in.dim(0), cols = in.dim(1), ch = ker.dim(0), k = ker.dim(1);
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    Tensor out({ch, rows, cols});
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t f = 0; f < cols; ++f) {
                double acc = bias.value()[c];
                for (std::size_t u = 0; u < k; ++u) {
                    const auto rr = static_cast<std::ptrdiff_t>(r + u) - pad;
                    if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(rows)) continue;
                    for (std::size_t v = 0; v < k; ++v) {
                        const auto ff = static_cast<std::ptrdiff_t>(f + v) - pad;
                        if (ff < 0 || ff >= static_cast<std::ptrdiff_t>(cols)) continue;
                        acc += ker(c, u, v) * in(rr, ff);
                    }
                }
                out(c, r, f) = acc;
            }
    ad::Node* pn = plane.node();
    ad::Node* kn = kernel.node();
    ad::Node* bn = bias.node();
    return tape.record(std::move(out), {plane, kernel, bias}, [=](const Tensor& g) {
        Tensor* gin = pn->needs_grad ? &pn->grad_buffer() : nullptr;
        Tensor* gker = kn->needs_grad ? &kn->grad_buffer() : nullptr;
        Tensor* gbias = bn->needs_grad ? &bn->grad_buffer() : nullptr;
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t f = 0; f < cols; ++f) {
                    const double go = g(c, r, f);
                    if (gbias) (*gbias)[c] += go;
                    for (std::size_t u = 0; u < k; ++u) {
                        const auto rr = static_cast<std::ptrdiff_t>(r + u) - pad;
                        if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(rows)) continue;
                        for (std::size_t v = 0; v < k; ++v) {
                            const auto ff = static_cast<std::ptrdiff_t>(f + v) - pad;
                            if (ff < 0 || ff >= static_cast<std::ptrdiff_t>(cols)) continue;
                            if (gin) (*gin)(rr, ff) += go * kn->value(c, u, v);
                            if (gker) (*gker)(c, u, v) += go * pn->value(rr, ff);
                        }
                    }
                }
    });
}

ad::Var global_avg_pool(ad::Tape& tape, ad::Var x) {
    const std::size_t ch = x.value().dim(0), per = x.value().size() / ch;
    Tensor out({ch});
    for (std::size_t c = 0; c < ch; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < per; ++k) s += x.value()[c * per + k];
        out[c] = s / static_cast<double>(per);
    }
    ad::Node* xn = x.node();
    return tape.record(std::move(out), {x}, [xn, ch, per](const Tensor& g) {
        Tensor& gx = xn->grad_buffer();
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t k = 0; k < per; ++k) gx[c * per + k] += g[c] / static_cast<double>(per);
    });
}

ad::Var sparsity_logit(ad::Tape& tape, ad::Var plane, const SparsifierWeights<ad::Var>& w) {
    if (plane.value().rank() != 2 || plane.value().dim(0) < 5)
        throw ContractError("sparsity level needs an [L, F] market index with L >= 5");
    std::array<ad::Var, 3> pooled;
    for (std::size_t b = 0; b < 3; ++b)
        pooled[b] = global_avg_pool(tape, ad::gelu(tape, conv2d_same(tape, plane, w.kernel[b], w.bias[b])));
    ad::Var features = ad::concat_last(tape, pooled);
    return ad::add_bias(tape, ad::linear(tape, features, w.proj), w.proj_bias);
}

ad::Var sparsity_level(ad::Tape& tape, ad::Var plane, const SparsifierWeights<ad::Var>& w, double tau) {
    return ad::scale(tape, ad::sigmoid(tape, sparsity_logit(tape, plane, w)), tau);
}

double sparsity_level(const MarketIndexWindow& m, const SparsifierParams& params, double tau) {
    ad::Tape tape;
    SparsifierWeights<ad::Var> w;
    for (std::size_t b = 0; b < 3; ++b) {
        w.kernel[b] = tape.constant(params.kernel[b]);
        w.bias[b] = tape.constant(params.bias[b]);
    }
    w.proj = tape.constant(params.proj);
    w.proj_bias = tape.constant(params.proj_bias);
    const Tensor plane = m.values.reshaped({m.values.dim(1), m.values.dim(2)});
    return sparsity_level(tape, tape.constant(plane), w, tau).item();
}

std::size_t retained_edge_budget(double kappa, std::size_t nodes) {
    if (!(kappa > 0.0)) throw ContractError("sparsity level must be positive");
    const std::size_t edges = nodes * (nodes - 1);
    const double k = std::ceil(kappa * static_cast<double>(edges));
    return std::min(edges, static_cast<std::size_t>(k));
}

DailyGraph sparsify(const Tensor& adjacency, double kappa, std::size_t day) {
    const std::size_t n = adjacency.dim(0);
    const std::size_t budget = retained_edge_budget(kappa, n);
    std::vector<std::size_t> edges;
    edges.reserve(n * (n - 1));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) edges.push_back(i * n + j);
    // Flat index order is (i, j) lexicographic order.
    std::partial_sort(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(budget), edges.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double wa = adjacency[a], wb = adjacency[b];
                          return wa != wb ? wa > wb : a < b;
                      });
    DailyGraph g;
    g.adjacency = adjacency;
    g.kappa = kappa;
    g.day = day;
    g.mask.assign(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) g.mask[i * n + i] = 1;
    for (std::size_t k = 0; k < budget; ++k) g.mask[edges[k]] = 1;
    return g;
}

}  // namespace finmamba
