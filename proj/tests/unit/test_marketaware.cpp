#include <catch_amalgamated.hpp>

#include "finmamba/errors.hpp"
#include "finmamba/marketaware.hpp"
#include "oracles.hpp"

using namespace finmamba;
using Catch::Approx;

namespace {

SparsifierWeights<ad::Var> bind_constants(ad::Tape& tape, const SparsifierParams& p) {
    std::vector<const Tensor*> tensors;
    SparsifierParams::each(p, [&](const std::string&, const Tensor& t) { tensors.push_back(&t); });
    SparsifierWeights<ad::Var> w;
    std::size_t k = 0;
    SparsifierWeights<ad::Var>::each(w, [&](const std::string&, ad::Var& v) { v = tape.constant(*tensors[k++]); });
    return w;
}

MarketIndexWindow plane(const Tensor& m) { return {m.reshaped({1, m.dim(0), m.dim(1)})}; }

Tensor symmetric_adjacency(std::mt19937_64& rng, std::size_t n) {
    Tensor a = oracle::random_tensor(rng, {n, n});
    for (std::size_t i = 0; i < n; ++i) {
        a(i, i) = 1.0;
        for (std::size_t j = 0; j < i; ++j) a(i, j) = a(j, i);
    }
    return a;
}

}  // namespace

TEST_CASE("sparsity level range and zero projection", "[marketaware]") {
    std::mt19937_64 rng(1);
    SparsifierParams p = init_sparsifier(rng, 4);
    for (int rep = 0; rep < 20; ++rep) {
        const Tensor m = oracle::random_tensor(rng, {20, 6}, -3, 3);
        const double k = sparsity_level(plane(m), p, 1.0);
        CHECK(k > 0.0);
        CHECK(k < 1.0);
        CHECK(sparsity_level(plane(m), p, 0.4) == Approx(0.4 * k).margin(1e-15));
    }
    p.proj.fill(0.0);
    p.proj_bias.fill(0.0);
    CHECK(sparsity_level(plane(oracle::random_tensor(rng, {20, 6})), p, 0.8) == 0.4);
}

TEST_CASE("same-padded convolution matches a direct stencil", "[marketaware]") {
    std::mt19937_64 rng(2);
    const Tensor m = oracle::random_tensor(rng, {6, 5});
    const Tensor k = oracle::random_tensor(rng, {2, 3, 3});
    const Tensor b = oracle::random_tensor(rng, {2});
    ad::Tape tape;
    const Tensor y = conv2d_same(tape, tape.constant(m), tape.constant(k), tape.constant(b)).value();
    REQUIRE(y.shape() == std::vector<std::size_t>{2, 6, 5});
    for (std::size_t c = 0; c < 2; ++c)
        for (long r = 0; r < 6; ++r)
            for (long q = 0; q < 5; ++q) {
                double v = b[c];
                for (long dr = -1; dr <= 1; ++dr)
                    for (long dq = -1; dq <= 1; ++dq) {
                        const long rr = r + dr, qq = q + dq;
                        if (rr < 0 || rr >= 6 || qq < 0 || qq >= 5) continue;
                        v += k(c, dr + 1, dq + 1) * m(rr, qq);
                    }
                CHECK(y(c, r, q) == Approx(v).margin(1e-14));
            }
}

TEST_CASE("kappa sensitivity to the market index matches finite differences", "[marketaware]") {
    std::mt19937_64 rng(3);
    const SparsifierParams p = init_sparsifier(rng, 4);
    for (int rep = 0; rep < 3; ++rep) {
        Tensor m = oracle::random_tensor(rng, {12, 6}, -2, 2);
        ad::Tape tape;
        ad::Var in = tape.parameter(m);
        ad::Var k = sparsity_level(tape, in, bind_constants(tape, p), 1.0);
        tape.backward(k);
        const Tensor g = in.grad();
        double worst = 0;
        for (std::size_t e = 0; e < m.size(); ++e) {
            const double fd =
                oracle::central_difference([&] { return sparsity_level(plane(m), p, 1.0); }, m[e], 1e-4);
            worst = std::max(worst, std::abs(fd - g[e]) / std::max({std::abs(fd), std::abs(g[e]), 1e-12}));
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("edge budget", "[marketaware]") {
    CHECK(retained_edge_budget(0.5, 3) == 3);
    CHECK(retained_edge_budget(0.01, 10) == 1);
    CHECK(retained_edge_budget(1.0, 10) == 90);
    CHECK(retained_edge_budget(1.7, 4) == 12);
    CHECK_THROWS_AS(retained_edge_budget(0.0, 4), ContractError);
}

TEST_CASE("sparsify keeps the heaviest edges", "[marketaware]") {
    SECTION("three-node worked example") {
        Tensor a({3, 3}, std::vector<double>{1, 0.9, 0.05, 0.8, 1, 0.2, 0.7, 0.1, 1});
        const DailyGraph g = sparsify(a, 0.5);
        CHECK(g.retained_off_diagonal() == 3);
        CHECK(g.retained(0, 1));
        CHECK(g.retained(1, 0));
        CHECK(g.retained(2, 0));
        CHECK_FALSE(g.retained(1, 2));
        for (std::size_t i = 0; i < 3; ++i) CHECK(g.retained(i, i));
    }
    SECTION("ties at the cutoff go to the smaller pair") {
        Tensor a({3, 3}, std::vector<double>{1, 0.5, 0.5, 0.1, 1, 0.1, 0.1, 0.1, 1});
        const DailyGraph g = sparsify(a, 1.0 / 6.0);
        CHECK(g.retained(0, 1));
        CHECK_FALSE(g.retained(0, 2));
    }
    SECTION("full retention") {
        std::mt19937_64 rng(4);
        const DailyGraph g = sparsify(symmetric_adjacency(rng, 7), 1.0);
        CHECK(g.retained_off_diagonal() == 42);
    }
    SECTION("random cases agree with a full sort and are scale invariant") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> kappa(0.01, 1.0);
        std::uniform_int_distribution<std::size_t> size(2, 9);
        for (int rep = 0; rep < 200; ++rep) {
            const std::size_t n = size(rng);
            const Tensor a = symmetric_adjacency(rng, n);
            const double k = kappa(rng);
            const DailyGraph g = sparsify(a, k, 3);
            const std::size_t keep = static_cast<std::size_t>(std::ceil(k * static_cast<double>(n * (n - 1))));
            CHECK(g.retained_off_diagonal() == keep);
            CHECK(g.mask == oracle::top_edges(a, keep));
            Tensor scaled = a;
            for (double& v : scaled.storage()) v *= 3.7;
            CHECK(sparsify(scaled, k).mask == g.mask);
            CHECK(g.day == 3);
        }
    }
}
