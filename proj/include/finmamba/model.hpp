#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "finmamba/autodiff.hpp"
#include "finmamba/dyngraph.hpp"
#include "finmamba/gatagg.hpp"
#include "finmamba/marketaware.hpp"
#include "finmamba/mlmamba.hpp"
#include "finmamba/objective.hpp"

namespace finmamba {

struct ModelConfig {
    std::size_t features = kFeatureCount;
    std::size_t heads = 4;
    std::size_t gnn_layers = 2;
    std::size_t sparsifier_channels = 4;
    double tau = 1.0;
    MambaConfig mamba;
};

template <class T>
struct ModelWeights {
    SparsifierWeights<T> sparsifier;
    GatWeights<T> gat;
    std::vector<LevelWeights<T>> levels;
    HeadWeights<T> head;

    /// Visits every trainable tensor in registry order with its stable name.
    template <class Self, class F>
    static void each(Self& self, F&& f) {
        SparsifierWeights<T>::each(self.sparsifier, f);
        GatWeights<T>::each(self.gat, f);
        for (std::size_t i = 0; i < self.levels.size(); ++i)
            LevelWeights<T>::each(self.levels[i], "level" + std::to_string(i + 1), f);
        HeadWeights<T>::each(self.head, f);
    }
};

/// Every trainable tensor plus a same-shaped gradient slot, addressed
/// through a flat registry with stable names.
class ModelParams {
public:
    static ModelParams init(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    const std::vector<LevelSpec>& specs() const { return specs_; }
    ModelWeights<Tensor>& weights() { return weights_; }
    const ModelWeights<Tensor>& weights() const { return weights_; }

    std::vector<std::string> names() const;
    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;
    std::vector<Tensor>& grads() { return grads_; }
    const std::vector<Tensor>& grads() const { return grads_; }

    void zero_grad();
    std::size_t parameter_count() const;

private:
    ModelConfig config_;
    std::vector<LevelSpec> specs_;
    ModelWeights<Tensor> weights_;
    std::vector<Tensor> grads_;
};

/// Parameter-independent inputs of one trading day.
struct DayInput {
    std::size_t day = 0;             // panel index of the window's last day
    Tensor features;                 // [N, L, F], normalised
    std::vector<double> returns;     // [N], next-day labels
    Tensor adjacency;                // [N, N], Q ∘ D
};

/// Builds the day input from a normalised window and the raw window used for ranking.
DayInput make_day_input(const Window& normalised, const Window& raw, const DecayMatrix& decay);

struct ForwardOutput {
    ad::Var scores;  // [N, 1]
    ad::Var z;       // [N, L, F]
    ad::Var kappa;   // [1]
    DailyGraph graph;
};

struct ForwardOptions {
    /// Replaces the top-K mask (gradient checks hold it fixed).
    const std::vector<unsigned char>* mask_override = nullptr;
};

ModelWeights<ad::Var> bind(ad::Tape& tape, const ModelParams& params, bool trainable);
/// Gradients of the bound leaves, in registry order.
std::vector<Tensor> collect_grads(const ModelWeights<ad::Var>& bound);

/// dyngraph -> market-aware sparsification -> graph attention -> multi-level scan -> score.
ForwardOutput forward(ad::Tape& tape, const DayInput& input, const ModelWeights<ad::Var>& w, const ModelParams& params,
                      const ForwardOptions& options = {});

struct LossSettings {
    LossWeights weights;
    double lambda_kappa = 0.0;
};

struct DayLoss {
    ad::Var total;
    double rp = 0.0;
    double gib = 0.0;
};

/// rp + lambda * gib (+ lambda_kappa * kappa) for one day.
DayLoss day_loss(ad::Tape& tape, const ForwardOutput& out, const DayInput& input, const LossSettings& settings);

struct Prediction {
    std::vector<double> scores;
    Tensor z;
    double kappa = 0.0;
    DailyGraph graph;
};

/// Forward pass without gradients.
Prediction predict(const DayInput& input, const ModelParams& params);

}  // namespace finmamba
