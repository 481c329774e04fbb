#include "finmamba/mlmamba.hpp"

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

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

Tensor negative_exp(const Tensor& a_log) {
    Tensor a = a_log;
    for (double& v : a.storage()) v = -std::exp(v);
    return a;
}

LevelWeights<ad::Var> bind_constants(ad::Tape& tape, const SsmParams& p) {
    LevelWeights<ad::Var> w;
    std::vector<const Tensor*> src;
    SsmParams::each(p, "", [&](const std::string&, const Tensor& t) { src.push_back(&t); });
    std::size_t k = 0;
    LevelWeights<ad::Var>::each(w, "", [&](const std::string&, ad::Var& v) { v = tape.constant(*src[k++]); });
    return w;
}

}  // namespace

LevelSpec level_spec(std::size_t index, const MambaConfig& config) {
    if (index == 0 || index > 16) throw ConfigError("level index must be in 1..16");
    return LevelSpec{index, std::size_t{1} << (index - 1), config.d_model, config.d_out};
}

std::size_t dt_rank(std::size_t d_model) { return (d_model + 15) / 16; }

SsmParams init_level(std::mt19937_64& rng, const LevelSpec& spec, std::size_t embed_width, std::size_t d_state) {
    const std::size_t d = spec.d_model, r = dt_rank(d);
    SsmParams p;
    p.in_proj = uniform(rng, {d, embed_width}, fan_in_bound(embed_width));
    p.dt_down = uniform(rng, {r, d}, fan_in_bound(d));
    p.dt_up = uniform(rng, {d, r}, fan_in_bound(r));
    // softplus(dt_bias) log-uniform in [1e-3, 1e-1]
    p.dt_bias = Tensor({d});
    std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
    for (double& v : p.dt_bias.storage()) {
        const double dt = std::exp(u(rng));
        v = dt + std::log(-std::expm1(-dt));
    }
    p.a_log = Tensor({d, d_state});
    for (std::size_t c = 0; c < d; ++c)
        for (std::size_t n = 0; n < d_state; ++n) p.a_log(c, n) = std::log(static_cast<double>(n + 1));
    p.b_proj = uniform(rng, {d_state, d}, fan_in_bound(d));
    p.c_proj = uniform(rng, {d_state, d}, fan_in_bound(d));
    p.gate = uniform(rng, {d, d}, fan_in_bound(d));
    p.out_proj = uniform(rng, {d, d}, fan_in_bound(d));
    p.relevel = uniform(rng, {spec.d_out, d}, fan_in_bound(d));
    return p;
}

ScoreHead init_head(std::mt19937_64& rng, std::size_t levels, std::size_t d_out) {
    return ScoreHead{uniform(rng, {1, levels * d_out}, fan_in_bound(levels * d_out)), Tensor({1})};
}

ad::Var level_project(ad::Tape& tape, ad::Var embedding, ad::Var in_proj, const LevelSpec& spec) {
    return ad::time_pool(tape, ad::linear(tape, embedding, in_proj), spec.stride);
}

ad::Var selective_scan(ad::Tape& tape, ad::Var x, ad::Var delta, ad::Var a_log, ad::Var b, ad::Var c) {
    auto a = std::make_shared<Tensor>(negative_exp(a_log.value()));
    auto states = std::make_shared<Tensor>();
    const kernels::ScanInputs in{x.value(), delta.value(), *a, b.value(), c.value()};
    Tensor y = kernels::selective_scan(in, states.get());
    ad::Node* xn = x.node();
    ad::Node* dn = delta.node();
    ad::Node* an = a_log.node();
    ad::Node* bn = b.node();
    ad::Node* cn = c.node();
    return tape.record(std::move(y), {x, delta, a_log, b, c}, [=](const Tensor& gy) {
        const kernels::ScanInputs inputs{xn->value, dn->value, *a, bn->value, cn->value};
        kernels::ScanGrads g = kernels::selective_scan_backward(inputs, *states, gy);
        auto acc = [](ad::Node* n, const Tensor& src) {
            if (!n->needs_grad) return;
            Tensor& dst = n->grad_buffer();
            for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
        };
        acc(xn, g.x);
        acc(dn, g.delta);
        acc(bn, g.b);
        acc(cn, g.c);
        if (an->needs_grad) {
            Tensor& ga = an->grad_buffer();
            for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g.a[k] * (*a)[k];  // dA/da_log = A
        }
    });
}

ad::Var ssm_block(ad::Tape& tape, ad::Var x, const LevelWeights<ad::Var>& w, const ScanOptions& options) {
    ad::Var delta = ad::softplus(
        tape, ad::add_bias(tape, ad::linear(tape, ad::linear(tape, x, w.dt_down), w.dt_up), w.dt_bias));
    ad::Var b = ad::linear(tape, x, w.b_proj);
    ad::Var c = ad::linear(tape, x, w.c_proj);
    ad::Var y = selective_scan(tape, x, delta, w.a_log, b, c);
    if (options.gate) y = ad::mul(tape, y, ad::silu(tape, ad::linear(tape, x, w.gate)));
    if (options.out_proj) y = ad::linear(tape, y, w.out_proj);
    return y;
}

ad::Var level_features(ad::Tape& tape, ad::Var embedding, const LevelWeights<ad::Var>& w, const LevelSpec& spec) {
    ad::Var x = ad::rms_norm(tape, level_project(tape, embedding, w.in_proj, spec));
    ad::Var o = ssm_block(tape, x, w);
    return ad::linear(tape, ad::last_step(tape, ad::add(tape, o, x)), w.relevel);
}

ad::Var score(ad::Tape& tape, std::span<const ad::Var> per_level, const HeadWeights<ad::Var>& head) {
    ad::Var joined = per_level.size() == 1 ? per_level.front() : ad::concat_last(tape, per_level);
    return ad::add_bias(tape, ad::linear(tape, joined, head.weight), head.bias);
}

Tensor level_project(const StockEmbedding& p, const SsmParams& params, const LevelSpec& spec) {
    ad::Tape tape;
    return level_project(tape, tape.constant(p.p), tape.constant(params.in_proj), spec).value();
}

Tensor selective_scan(const Tensor& x, const SsmParams& params, const ScanOptions& options) {
    ad::Tape tape;
    return ssm_block(tape, tape.constant(x), bind_constants(tape, params), options).value();
}

std::vector<double> score(const StockEmbedding& p, const std::vector<SsmParams>& levels,
                          const std::vector<LevelSpec>& specs, const ScoreHead& head) {
    if (levels.size() != specs.size() || levels.empty()) throw ContractError("score: level/spec count mismatch");
    ad::Tape tape;
    ad::Var emb = tape.constant(p.p);
    std::vector<ad::Var> feats;
    for (std::size_t i = 0; i < levels.size(); ++i)
        feats.push_back(level_features(tape, emb, bind_constants(tape, levels[i]), specs[i]));
    HeadWeights<ad::Var> h{tape.constant(head.weight), tape.constant(head.bias)};
    const Tensor& y = score(tape, feats, h).value();
    return {y.storage().begin(), y.storage().end()};
}

}  // namespace finmamba
