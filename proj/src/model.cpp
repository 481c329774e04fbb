#include "finmamba/model.hpp"

#include <array>
#include <random>

#include "finmamba/errors.hpp"

namespace finmamba {

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
    if (config.heads == 0 || config.gnn_layers == 0 || config.mamba.levels == 0 || config.mamba.d_model == 0 ||
        config.mamba.d_out == 0 || config.mamba.d_state == 0 || config.sparsifier_channels == 0)
        throw ConfigError("model dimensions must be positive");
    if (!(config.tau > 0.0)) throw ConfigError("tau must be positive");
    ModelParams p;
    p.config_ = config;
    std::mt19937_64 rng(seed);
    p.weights_.sparsifier = init_sparsifier(rng, config.sparsifier_channels);
    p.weights_.gat = init_gat(rng, config.features, config.heads, config.gnn_layers);
    for (std::size_t i = 1; i <= config.mamba.levels; ++i) {
        p.specs_.push_back(level_spec(i, config.mamba));
        p.weights_.levels.push_back(init_level(rng, p.specs_.back(), 2 * config.features, config.mamba.d_state));
    }
    p.weights_.head = init_head(rng, config.mamba.levels, config.mamba.d_out);
    for (const Tensor* t : p.tensors()) p.grads_.push_back(Tensor::like(*t));
    return p;
}

std::vector<std::string> ModelParams::names() const {
    std::vector<std::string> out;
    ModelWeights<Tensor>::each(weights_, [&](const std::string& name, const Tensor&) { out.push_back(name); });
    return out;
}

std::vector<Tensor*> ModelParams::tensors() {
    std::vector<Tensor*> out;
    ModelWeights<Tensor>::each(weights_, [&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
    std::vector<const Tensor*> out;
    ModelWeights<Tensor>::each(weights_, [&](const std::string&, const Tensor& t) { out.push_back(&t); });
    return out;
}

void ModelParams::zero_grad() {
    for (Tensor& g : grads_) g.fill(0.0);
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : tensors()) n += t->size();
    return n;
}

DayInput make_day_input(const Window& normalised, const Window& raw, const DecayMatrix& decay) {
    if (normalised.day != raw.day) throw ContractError("normalised and raw windows refer to different days");
    DayInput in;
    in.day = raw.day;
    in.features = normalised.features;
    in.returns = raw.returns;
    in.adjacency = combine_adjacency(spearman_matrix(raw), decay);
    return in;
}

ModelWeights<ad::Var> bind(ad::Tape& tape, const ModelParams& params, bool trainable) {
    const auto& src = params.weights();
    ModelWeights<ad::Var> w;
    w.gat.weight.resize(src.gat.layers());
    w.gat.attn.resize(src.gat.layers());
    w.gat.out.resize(src.gat.layers());
    w.levels.resize(src.levels.size());
    const auto tensors = params.tensors();
    std::size_t k = 0;
    ModelWeights<ad::Var>::each(w, [&](const std::string&, ad::Var& v) {
        v = trainable ? tape.parameter(*tensors[k]) : tape.constant(*tensors[k]);
        ++k;
    });
    return w;
}

std::vector<Tensor> collect_grads(const ModelWeights<ad::Var>& bound) {
    std::vector<Tensor> out;
    ModelWeights<ad::Var>::each(bound, [&](const std::string&, const ad::Var& v) { out.push_back(v.grad()); });
    return out;
}

ForwardOutput forward(ad::Tape& tape, const DayInput& input, const ModelWeights<ad::Var>& w, const ModelParams& params,
                      const ForwardOptions& options) {
    const ModelConfig& cfg = params.config();
    const Tensor& feats = input.features;
    if (feats.rank() != 3 || feats.dim(2) != cfg.features) throw ContractError("day features must be [N, L, F]");
    const std::size_t n = feats.dim(0), len = feats.dim(1), f = feats.dim(2);
    if (input.adjacency.shape() != std::vector<std::size_t>{n, n} || input.returns.size() != n)
        throw ContractError("day adjacency/returns do not match the stock count");

    Window view;
    view.features = feats;
    const MarketIndexWindow m = market_index(view);

    ForwardOutput out;
    out.kappa = sparsity_level(tape, tape.constant(m.values.reshaped({len, f})), w.sparsifier, cfg.tau);
    out.graph = sparsify(input.adjacency, out.kappa.item(), input.day);
    if (options.mask_override) {
        if (options.mask_override->size() != n * n) throw ContractError("mask override has the wrong size");
        out.graph.mask = *options.mask_override;
    }

    ad::Var h = tape.constant(feats);
    out.z = gat_forward(tape, h, out.graph.mask, w.gat);
    const std::array<ad::Var, 2> halves{h, out.z};
    ad::Var embedding = ad::concat_last(tape, halves);

    std::vector<ad::Var> per_level;
    for (std::size_t i = 0; i < w.levels.size(); ++i)
        per_level.push_back(level_features(tape, embedding, w.levels[i], params.specs()[i]));
    out.scores = score(tape, per_level, w.head);
    return out;
}

DayLoss day_loss(ad::Tape& tape, const ForwardOutput& out, const DayInput& input, const LossSettings& settings) {
    DayLoss loss;
    ad::Var rp = loss_rp(tape, out.scores, input.returns, settings.weights.eta);
    ad::Var gib = loss_gib(tape, out.z, input.features);
    loss.rp = rp.item();
    loss.gib = gib.item();
    loss_total(loss.rp, loss.gib, settings.weights, input.day);  // divergence check
    if (settings.lambda_kappa != 0.0) {
        const std::array<ad::Var, 3> parts{rp, gib, out.kappa};
        const std::array<double, 3> wts{1.0, settings.weights.lambda, settings.lambda_kappa};
        loss.total = ad::weighted_sum(tape, parts, wts);
    } else {
        const std::array<ad::Var, 2> parts{rp, gib};
        const std::array<double, 2> wts{1.0, settings.weights.lambda};
        loss.total = ad::weighted_sum(tape, parts, wts);
    }
    return loss;
}

Prediction predict(const DayInput& input, const ModelParams& params) {
    ad::Tape tape;
    const auto w = bind(tape, params, false);
    ForwardOutput out = forward(tape, input, w, params);
    Prediction p;
    p.scores.assign(out.scores.value().storage().begin(), out.scores.value().storage().end());
    p.z = out.z.value();
    p.kappa = out.kappa.item();
    p.graph = std::move(out.graph);
    return p;
}

}  // namespace finmamba
