#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "finmamba/config.hpp"
#include "finmamba/model.hpp"
#include "finmamba/panel.hpp"

namespace finmamba {

/// Indices into Dataset::days, chronological and disjoint.
struct DataSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> valid;
    std::vector<std::size_t> test;
};

/// Everything the model consumes, derived once from a panel.
struct Dataset {
    StockPanel panel;
    IndustryMap industry;
    FeatureScaler scaler;
    std::vector<DayInput> days;
    DataSplit split;
};

DataSplit split_windows(const std::vector<Window>& windows, const StockPanel& panel, const TrainConfig& config);

/// Windows, split, training-range scaler, per-day adjacency.
Dataset prepare_dataset(const StockPanel& panel, const IndustryMap& industry, const TrainConfig& config);

/// Adaptive first/second-moment optimiser over the registry.
class Adam {
public:
    Adam(const ModelParams& params, double lr, double beta1, double beta2, double eps);
    void step(ModelParams& params);
    std::size_t steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    double train_ic = 0.0;
    double valid_ic = 0.0;
    double train_rp = 0.0;   // ranking-loss part of train_loss
    double train_gib = 0.0;  // bottleneck part, before lambda
};

struct TrainingLog {
    std::vector<EpochLog> epochs;
    std::size_t best_epoch = 0;
    bool early_stopped = false;
};

void write_training_log(std::ostream& out, const TrainingLog& log);

struct TrainResult {
    ModelParams params;
    TrainingLog log;
};

struct Evaluation {
    double loss = 0.0;     // mean per-day total loss
    double rank_ic = 0.0;  // mean daily rank IC
    double rp = 0.0;
    double gib = 0.0;
    std::vector<std::vector<double>> scores;
};

Evaluation evaluate(const ModelParams& params, const Dataset& data, std::span<const std::size_t> days,
                    const LossSettings& settings);

/// Accumulates mean per-day gradients of the total loss into params.grads();
/// returns the mean loss and per-day scores.
Evaluation accumulate_gradients(ModelParams& params, const Dataset& data, std::span<const std::size_t> days,
                                const LossSettings& settings);

/// Rescales the accumulated gradients to a global L2 norm of at most
/// `max_norm`; returns the norm before clipping.
double clip_gradients(ModelParams& params, double max_norm);

TrainResult train(const Dataset& data, const TrainConfig& config);
TrainResult train(const StockPanel& panel, const IndustryMap& industry, const TrainConfig& config);

}  // namespace finmamba
