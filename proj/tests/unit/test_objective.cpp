#include <catch_amalgamated.hpp>

#include <limits>

#include "finmamba/errors.hpp"
#include "finmamba/objective.hpp"
#include "oracles.hpp"

using namespace finmamba;
using Catch::Approx;

namespace {

double hinge_oracle(const std::vector<double>& y, const std::vector<double>& r) {
    double h = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j) h += std::max(0.0, -(y[i] - y[j]) * (r[i] - r[j]));
    return h;
}

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
    std::normal_distribution<double> d(0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

}  // namespace

TEST_CASE("ranking loss closed forms", "[objective]") {
    const std::vector<double> y{1, 0}, r{0, 1};
    CHECK(pairwise_hinge(y, r) == 2.0);
    CHECK(loss_rp(y, r, 3.0) == 8.0);
    CHECK(loss_rp(r, r, 3.0) == 0.0);
    CHECK(loss_rp(y, r, 0.0) == 2.0);
    CHECK_THROWS_AS(loss_rp(std::vector<double>{1.0}, r, 1.0), ContractError);
}

TEST_CASE("ranking loss against a pair enumeration", "[objective]") {
    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 100; ++rep) {
        const auto y = random_vec(rng, 9), r = random_vec(rng, 9, 0.02);
        double mse = 0;
        for (std::size_t i = 0; i < 9; ++i) mse += (y[i] - r[i]) * (y[i] - r[i]);
        CHECK(loss_rp(y, r, 2.5) == Approx(mse + 2.5 * hinge_oracle(y, r)).epsilon(1e-12));
        auto shifted = y;
        for (double& v : shifted) v += 3.25;
        CHECK(pairwise_hinge(shifted, r) == Approx(pairwise_hinge(y, r)).epsilon(1e-12).margin(1e-15));
    }
}

TEST_CASE("information bottleneck closed forms", "[objective]") {
    std::mt19937_64 rng(2);
    const Tensor s = oracle::random_tensor(rng, {4, 5, 6});
    CHECK(loss_gib(s, s) == 0.0);

    const Tensor z1({1, 1, 2}, std::vector<double>{1, 1});
    const Tensor s1({1, 1, 2}, std::vector<double>{-1, 1});
    CHECK(loss_gib(z1, s1) == 1.0);

    Tensor z = oracle::random_tensor(rng, {4, 5, 6});
    const double base = loss_gib(z, s);
    Tensor z2 = z, s2 = s;
    for (double& v : z2.storage()) v += 7.5;
    for (double& v : s2.storage()) v += 7.5;
    CHECK(loss_gib(z2, s2) == Approx(base).epsilon(1e-12));

    // per-stock direct evaluation
    double expect = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        double mz = 0, ms = 0, vz = 0, vs = 0;
        for (std::size_t e = 0; e < 30; ++e) mz += z[i * 30 + e] / 30, ms += s[i * 30 + e] / 30;
        for (std::size_t e = 0; e < 30; ++e) {
            vz += (z[i * 30 + e] - mz) * (z[i * 30 + e] - mz) / 30;
            vs += (s[i * 30 + e] - ms) * (s[i * 30 + e] - ms) / 30;
        }
        expect += (mz - ms) * (mz - ms) / std::max(vz + vs, kGibFloor);
    }
    CHECK(base == Approx(expect).epsilon(1e-12));

    const Tensor flat_z({1, 2, 1}, 3.0), flat_s({1, 2, 1}, 1.0);
    CHECK(loss_gib(flat_z, flat_s) == Approx(4.0 / kGibFloor));
    CHECK_THROWS_AS(loss_gib(flat_z, s), ContractError);
}

TEST_CASE("total loss composition and divergence", "[objective]") {
    CHECK(loss_total(8, 1, {3, 1}) == 9.0);
    CHECK(loss_total(8, 1, {3, 0}) == 8.0);
    CHECK(loss_total(0, 0, {}) == 0.0);
    try {
        loss_total(std::numeric_limits<double>::quiet_NaN(), 1, {}, 42);
        FAIL("expected divergence");
    } catch (const TrainingDivergence& e) {
        CHECK(e.day_index == 42);
    }
    CHECK_THROWS_AS(loss_total(1, std::numeric_limits<double>::infinity(), {}), TrainingDivergence);
}

TEST_CASE("tape losses: values and gradients", "[objective]") {
    std::mt19937_64 rng(3);
    auto y = random_vec(rng, 6);
    const auto r = random_vec(rng, 6, 0.02);
    {
        ad::Tape tape;
        ad::Var yv = tape.parameter(Tensor({6, 1}, y));
        ad::Var l = loss_rp(tape, yv, r, 3.0);
        CHECK(l.item() == Approx(loss_rp(y, r, 3.0)).epsilon(1e-14));
        tape.backward(l);
        for (std::size_t i = 0; i < 6; ++i) {
            const double fd = oracle::central_difference([&] { return loss_rp(y, r, 3.0); }, y[i], 1e-7);
            CHECK(yv.grad()[i] == Approx(fd).epsilon(1e-6));
        }
    }
    {
        Tensor z = oracle::random_tensor(rng, {3, 4, 2});
        const Tensor s = oracle::random_tensor(rng, {3, 4, 2});
        ad::Tape tape;
        ad::Var zv = tape.parameter(z);
        ad::Var l = loss_gib(tape, zv, s);
        CHECK(l.item() == Approx(loss_gib(z, s)).epsilon(1e-14));
        tape.backward(l);
        for (std::size_t e = 0; e < z.size(); ++e) {
            const double fd = oracle::central_difference([&] { return loss_gib(z, s); }, z[e], 1e-6);
            CHECK(zv.grad()[e] == Approx(fd).epsilon(1e-6).margin(1e-9));
        }
    }
}

TEST_CASE("rank IC is the Spearman correlation", "[objective]") {
    std::mt19937_64 rng(4);
    const auto a = random_vec(rng, 12), b = random_vec(rng, 12);
    CHECK(rank_ic(a, b) == Approx(oracle::spearman(a, b)).margin(1e-12));
    CHECK(rank_ic(a, a) == Approx(1.0));
    const std::vector<double> flat(12, 1.0);
    CHECK(rank_ic(flat, b) == 0.0);
}
