#include <catch_amalgamated.hpp>

#include <functional>

#include "finmamba/autodiff.hpp"
#include "finmamba/errors.hpp"
#include "oracles.hpp"

using namespace finmamba;
using Catch::Approx;

namespace {

// Reduces any node to <y, r> for a fixed random r so every output element
// contributes a distinct weight to the gradient.
ad::Var contract(ad::Tape& tape, ad::Var y, const Tensor& r) {
    double v = 0;
    for (std::size_t i = 0; i < r.size(); ++i) v += y.value()[i] * r[i];
    ad::Node* yn = y.node();
    return tape.record(Tensor({1}, v), {y}, [yn, r](const Tensor& g) {
        Tensor& gy = yn->grad_buffer();
        for (std::size_t i = 0; i < r.size(); ++i) gy[i] += g[0] * r[i];
    });
}

using Builder = std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>;

// Compares tape gradients of every input with central differences.
double worst_relative_error(std::vector<Tensor> inputs, const Builder& build, std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    Tensor r;
    auto eval = [&](bool keep_grads, std::vector<Tensor>* grads) {
        ad::Tape tape;
        std::vector<ad::Var> vars;
        for (const auto& t : inputs) vars.push_back(tape.parameter(t));
        ad::Var y = build(tape, vars);
        if (r.empty()) r = oracle::random_tensor(rng, y.shape());
        ad::Var loss = contract(tape, y, r);
        if (keep_grads) {
            tape.backward(loss);
            for (auto& v : vars) grads->push_back(v.grad());
        }
        return loss.item();
    };
    std::vector<Tensor> analytic;
    eval(true, &analytic);
    double worst = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k)
        for (std::size_t e = 0; e < inputs[k].size(); ++e) {
            const double fd = oracle::central_difference([&] { return eval(false, nullptr); }, inputs[k][e], 1e-6);
            const double a = analytic[k][e];
            worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6}));
        }
    return worst;
}

}  // namespace

TEST_CASE("tensor shape, indexing and reshape", "[tensor]") {
    Tensor t({2, 3, 4}, 1.5);
    CHECK(t.size() == 24);
    CHECK(t.rank() == 3);
    t(1, 2, 3) = 7;
    CHECK(t[23] == 7);
    CHECK(t.row(1).size() == 12);
    const Tensor r = t.reshaped({6, 4});
    CHECK(r(5, 3) == 7);
    CHECK_THROWS(t.reshaped({5, 5}));
    CHECK(max_abs_diff(t, Tensor::like(t, 1.5)) == Approx(5.5));
    CHECK(shape_volume({3, 0, 2}) == 0);
}

TEST_CASE("scalar activations match closed forms", "[autodiff]") {
    for (double x : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
        CHECK(ad::gelu_value(x) == Approx(oracle::gelu(x)).margin(1e-15));
        CHECK(ad::silu_value(x) == Approx(oracle::silu(x)).margin(1e-15));
        CHECK(ad::softplus_value(x) == Approx(oracle::softplus(x)).margin(1e-15));
        CHECK(ad::sigmoid_value(x) == Approx(1 / (1 + std::exp(-x))).margin(1e-15));
    }
    CHECK(ad::softplus_value(800.0) == 800.0);
    CHECK(ad::sigmoid_value(-800.0) >= 0.0);
}

TEST_CASE("linear matches a dense matvec", "[autodiff]") {
    std::mt19937_64 rng(3);
    const Tensor x = oracle::random_tensor(rng, {2, 3, 5});
    const Tensor w = oracle::random_tensor(rng, {4, 5});
    const Tensor y = ad::linear_apply(x, w);
    REQUIRE(y.shape() == std::vector<std::size_t>{2, 3, 4});
    for (std::size_t r = 0; r < 6; ++r) {
        const auto expect = oracle::matvec(w, std::vector<double>(x.data() + r * 5, x.data() + r * 5 + 5));
        for (std::size_t o = 0; o < 4; ++o) CHECK(y[r * 4 + o] == Approx(expect[o]).margin(1e-14));
    }
    CHECK_THROWS_AS(ad::linear_apply(x, oracle::random_tensor(rng, {4, 6})), ContractError);
}

TEST_CASE("every tape op agrees with central differences", "[autodiff]") {
    std::mt19937_64 rng(11);
    auto rnd = [&](std::vector<std::size_t> s) { return oracle::random_tensor(rng, std::move(s)); };

    SECTION("linear") {
        CHECK(worst_relative_error({rnd({3, 4, 5}), rnd({2, 5})},
                                   [](ad::Tape& t, auto& v) { return ad::linear(t, v[0], v[1]); }) < 1e-7);
    }
    SECTION("add_bias, add, mul, scale") {
        CHECK(worst_relative_error({rnd({3, 4}), rnd({4})},
                                   [](ad::Tape& t, auto& v) { return ad::add_bias(t, v[0], v[1]); }) < 1e-7);
        CHECK(worst_relative_error({rnd({3, 4}), rnd({3, 4})}, [](ad::Tape& t, auto& v) {
                  return ad::mul(t, ad::add(t, v[0], v[1]), v[1]);
              }) < 1e-7);
        CHECK(worst_relative_error({rnd({5})}, [](ad::Tape& t, auto& v) { return ad::scale(t, v[0], -2.5); }) <
              1e-7);
    }
    SECTION("activations") {
        for (auto op : {&ad::gelu, &ad::silu, &ad::softplus, &ad::sigmoid})
            CHECK(worst_relative_error({rnd({4, 3})}, [op](ad::Tape& t, auto& v) { return op(t, v[0]); }) < 1e-7);
    }
    SECTION("concat, pooling, last step") {
        CHECK(worst_relative_error({rnd({2, 3, 2}), rnd({2, 3, 4})}, [](ad::Tape& t, auto& v) {
                  return ad::concat_last(t, std::span<const ad::Var>(v));
              }) < 1e-7);
        CHECK(worst_relative_error({rnd({2, 7, 3})}, [](ad::Tape& t, auto& v) { return ad::time_pool(t, v[0], 2); }) <
              1e-7);
        CHECK(worst_relative_error({rnd({2, 7, 3})}, [](ad::Tape& t, auto& v) { return ad::last_step(t, v[0]); }) <
              1e-7);
    }
    SECTION("rms normalisation") {
        CHECK(worst_relative_error({rnd({2, 3, 5})}, [](ad::Tape& t, auto& v) { return ad::rms_norm(t, v[0]); }) <
              1e-7);
    }
    SECTION("weighted sum of scalars") {
        const std::vector<double> w{0.5, -2.0};
        CHECK(worst_relative_error({rnd({1}), rnd({1})}, [&](ad::Tape& t, auto& v) {
                  return ad::weighted_sum(t, std::span<const ad::Var>(v), w);
              }) < 1e-7);
    }
}

TEST_CASE("rms normalisation gives unit mean square rows", "[autodiff]") {
    std::mt19937_64 rng(12);
    ad::Tape tape;
    const Tensor x = oracle::random_tensor(rng, {4, 6}, -5, 5);
    const Tensor y = ad::rms_norm(tape, tape.constant(x), 0.0).value();
    for (std::size_t r = 0; r < 4; ++r) {
        double ss = 0;
        for (std::size_t c = 0; c < 6; ++c) ss += y(r, c) * y(r, c);
        CHECK(ss / 6 == Approx(1.0).epsilon(1e-14));
        CHECK(y(r, 0) / y(r, 1) == Approx(x(r, 0) / x(r, 1)).epsilon(1e-12));
    }
    CHECK(ad::rms_norm(tape, tape.constant(Tensor({1, 3})), 1e-6).value()[0] == 0.0);
}

TEST_CASE("time pooling uses a shorter tail bucket", "[autodiff]") {
    ad::Tape tape;
    Tensor x({1, 5, 1}, std::vector<double>{1, 3, 5, 7, 10});
    const Tensor y = ad::time_pool(tape, tape.constant(x), 2).value();
    REQUIRE(y.shape() == std::vector<std::size_t>{1, 3, 1});
    CHECK(y[0] == 2);
    CHECK(y[1] == 6);
    CHECK(y[2] == 10);
}

TEST_CASE("constants receive no gradient and shared nodes accumulate", "[autodiff]") {
    ad::Tape tape;
    ad::Var c = tape.constant(Tensor({2}, 3.0));
    ad::Var p = tape.parameter(Tensor({2}, 2.0));
    ad::Var y = ad::mul(tape, ad::add(tape, p, p), c);  // 6p
    ad::Var loss = contract(tape, y, Tensor({2}, 1.0));
    tape.backward(loss);
    CHECK(p.grad()[0] == 6.0);
    CHECK(p.grad()[1] == 6.0);
    CHECK_FALSE(c.needs_grad());
}
