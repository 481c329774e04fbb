#include <catch_amalgamated.hpp>

#include "finmamba/errors.hpp"
#include "finmamba/gatagg.hpp"
#include "finmamba/kernels.hpp"
#include "finmamba/marketaware.hpp"
#include "oracles.hpp"

using namespace finmamba;
using Catch::Approx;

namespace {

DailyGraph random_graph(std::mt19937_64& rng, std::size_t n, double kappa) {
    Tensor a = oracle::random_tensor(rng, {n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) a(i, j) = a(j, i);
    return sparsify(a, kappa);
}

DailyGraph self_only(std::size_t n) {
    DailyGraph g;
    g.adjacency = Tensor({n, n});
    g.mask.assign(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) g.mask[i * n + i] = 1;
    return g;
}

std::vector<oracle::GatLayer> as_oracle(const GatParams& p) {
    std::vector<oracle::GatLayer> layers;
    for (std::size_t g = 0; g < p.layers(); ++g) layers.push_back({p.weight[g], p.attn[g], p.out[g]});
    return layers;
}

Tensor project(const Tensor& h, const Tensor& w) {
    Tensor out = Tensor::like(h);
    for (std::size_t i = 0; i < h.dim(0); ++i)
        for (std::size_t l = 0; l < h.dim(1); ++l)
            for (std::size_t o = 0; o < h.dim(2); ++o)
                for (std::size_t c = 0; c < h.dim(2); ++c) out(i, l, o) += w(o, c) * h(i, l, c);
    return out;
}

}  // namespace

TEST_CASE("attention over a lone self-edge is one", "[gatagg]") {
    std::mt19937_64 rng(1);
    const GatParams p = init_gat(rng, 6, 2, 1);
    const Tensor h = oracle::random_tensor(rng, {3, 5, 6});
    const Tensor a = attention_coefficients(h, self_only(3), p, 1);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(a(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("identical neighbours share attention equally", "[gatagg]") {
    std::mt19937_64 rng(2);
    const GatParams p = init_gat(rng, 6, 1, 1);
    Tensor h = oracle::random_tensor(rng, {3, 4, 6});
    for (std::size_t l = 0; l < 4; ++l)
        for (std::size_t f = 0; f < 6; ++f) h(2, l, f) = h(1, l, f);
    DailyGraph g = self_only(3);
    g.mask[0 * 3 + 0] = 0;  // node 0 attends to 1 and 2 only
    g.mask[0 * 3 + 1] = g.mask[0 * 3 + 2] = 1;
    const Tensor a = attention_coefficients(h, g, p, 0);
    CHECK(a(0, 1) == Approx(0.5).margin(1e-15));
    CHECK(a(0, 2) == Approx(0.5).margin(1e-15));
}

TEST_CASE("attention rows match a direct softmax", "[gatagg]") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 25; ++rep) {
        const GatParams p = init_gat(rng, 6, 3, 2);
        const Tensor h = oracle::random_tensor(rng, {4, 7, 6}, -2, 2);
        const DailyGraph g = random_graph(rng, 4, 0.4);
        for (std::size_t head = 0; head < 3; ++head) {
            const Tensor a = attention_coefficients(h, g, p, head);
            const Tensor expect = oracle::attention(project(h, p.weight[0]), g.mask, p.attn[0], head, kLeakySlope);
            for (std::size_t i = 0; i < 4; ++i) {
                double sum = 0;
                for (std::size_t j = 0; j < 4; ++j) {
                    sum += a(i, j);
                    CHECK(std::abs(a(i, j) - expect(i, j)) < 1e-12);
                    if (!g.retained(i, j)) CHECK(a(i, j) == 0.0);
                }
                CHECK(std::abs(sum - 1.0) < 1e-9);
            }
        }
    }
}

TEST_CASE("self-only graph with identity maps applies GELU", "[gatagg]") {
    std::mt19937_64 rng(4);
    GatParams p = init_gat(rng, 6, 1, 1);
    p.weight[0].fill(0);
    p.out[0].fill(0);
    for (std::size_t f = 0; f < 6; ++f) p.weight[0](f, f) = p.out[0](f, f) = 1.0;
    const Tensor h = oracle::random_tensor(rng, {3, 4, 6}, -3, 3);
    const Tensor z = aggregate(h, self_only(3), p);
    for (std::size_t e = 0; e < h.size(); ++e) CHECK(z[e] == Approx(oracle::gelu(h[e])).margin(1e-15));
}

TEST_CASE("identical nodes stay identical", "[gatagg]") {
    std::mt19937_64 rng(5);
    const GatParams p = init_gat(rng, 6, 4, 2);
    const Tensor one = oracle::random_tensor(rng, {1, 5, 6});
    Tensor h({4, 5, 6});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t e = 0; e < one.size(); ++e) h[i * one.size() + e] = one[e];
    const Tensor z = aggregate(h, random_graph(rng, 4, 0.5), p);
    for (std::size_t i = 1; i < 4; ++i)
        for (std::size_t e = 0; e < one.size(); ++e) CHECK(z[i * one.size() + e] == Approx(z[e]).margin(1e-14));
}

TEST_CASE("aggregate equals the double-loop message-passing oracle", "[gatagg]") {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 20; ++rep) {
        const GatParams p = init_gat(rng, 6, 4, 2);
        const Tensor h = oracle::random_tensor(rng, {5, 8, 6}, -2, 2);
        const DailyGraph g = random_graph(rng, 5, 0.3);
        const Tensor z = aggregate(h, g, p);
        const Tensor expect = oracle::gat(h, g.mask, as_oracle(p), kLeakySlope);
        CHECK(max_abs_diff(z, expect) < 1e-10);
    }
}

TEST_CASE("masked attention kernels agree bitwise", "[gatagg]") {
    std::mt19937_64 rng(7);
    const std::size_t n = 9;
    const Tensor src = oracle::random_tensor(rng, {n}), dst = oracle::random_tensor(rng, {n});
    const DailyGraph g = random_graph(rng, n, 0.3);
    const Tensor a = kernels::masked_attention(src.flat(), dst.flat(), g.mask, n, kLeakySlope);
    const Tensor b = kernels::masked_attention_serial(src.flat(), dst.flat(), g.mask, n, kLeakySlope);
    CHECK(max_abs_diff(a, b) == 0.0);
    const Tensor values = oracle::random_tensor(rng, {n, 4, 3});
    CHECK(max_abs_diff(kernels::attend(a, values), kernels::attend_serial(a, values)) == 0.0);
}

TEST_CASE("embedding concatenates raw features and aggregates", "[gatagg]") {
    std::mt19937_64 rng(8);
    const Tensor h = oracle::random_tensor(rng, {3, 4, 6});
    const Tensor z = oracle::random_tensor(rng, {3, 4, 6});
    const StockEmbedding e = build_embedding(h, z, 17);
    REQUIRE(e.p.shape() == std::vector<std::size_t>{3, 4, 12});
    CHECK(e.day == 17);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t l = 0; l < 4; ++l)
            for (std::size_t f = 0; f < 6; ++f) {
                CHECK(e.p(i, l, f) == h(i, l, f));
                CHECK(e.p(i, l, 6 + f) == z(i, l, f));
            }
    const StockEmbedding zero = build_embedding(h, Tensor::like(h));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t l = 0; l < 4; ++l)
            for (std::size_t f = 0; f < 6; ++f) CHECK(zero.p(i, l, 6 + f) == 0.0);
    CHECK_THROWS_AS(build_embedding(h, oracle::random_tensor(rng, {3, 5, 6})), ContractError);
}
