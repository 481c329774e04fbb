#pragma once

#include <iosfwd>
#include <string>

#include "finmamba/config.hpp"
#include "finmamba/model.hpp"

namespace finmamba {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    TrainConfig config;
    ModelParams params;
};

/// Text format: a version line, the config block, then one record per
/// registry tensor (name, rank, dims, hex-float values). Values round-trip bitwise.
void save_checkpoint(std::ostream& out, const ModelParams& params, const TrainConfig& config);
void save_checkpoint_file(const std::string& path, const ModelParams& params, const TrainConfig& config);

Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint_file(const std::string& path);

}  // namespace finmamba
