#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "finmamba/model.hpp"

namespace finmamba {

/// Training and model hyperparameters. Defaults follow the published
/// settings where they exist (lookback 20, lr 0.01, eta 3, lambda 1, two GNN
/// layers, two levels, top-9 portfolio).
struct TrainConfig {
    std::size_t lookback = 20;
    double learning_rate = 0.01;
    std::size_t epochs = 200;
    std::uint64_t seed = 7;
    double eta = 3.0;
    double lambda = 1.0;
    double lambda_kappa = 0.0;
    double tau = 1.0;
    double delta1 = 0.5;
    double delta2 = 0.1;
    std::size_t levels = 2;
    std::size_t heads = 4;
    std::size_t gnn_layers = 2;
    std::size_t d_model = 64;
    std::size_t d_out = 32;
    std::size_t d_state = 16;
    std::size_t sparsifier_channels = 4;
    std::size_t patience = 10;  // 0 disables early stopping
    std::size_t batch_days = 4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;  // global L2 norm cap per step; 0 disables
    // Chronological split. Empty dates fall back to a 4:1:1 split of the windows.
    std::string train_end;
    std::string valid_end;
    std::size_t top_k = 9;
    std::string execution = "close";  // close | open

    ModelConfig model() const;
    LossSettings loss() const;
    /// Throws ConfigError on any out-of-range value.
    void validate() const;
};

/// Applies one `key = value` override; unknown keys throw ConfigError.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

/// Reads `key = value` lines; `#` starts a comment; blank lines are ignored.
TrainConfig parse_config(std::istream& in, TrainConfig base = {});
TrainConfig load_config_file(const std::string& path, TrainConfig base = {});
/// Writes every key in the same format, round-trippable through parse_config.
void write_config(std::ostream& out, const TrainConfig& config);

}  // namespace finmamba
