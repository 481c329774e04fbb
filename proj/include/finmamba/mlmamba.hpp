#pragma once

#include <random>
#include <string>
#include <vector>

#include "finmamba/autodiff.hpp"
#include "finmamba/gatagg.hpp"

namespace finmamba {

struct MambaConfig {
    std::size_t levels = 2;
    std::size_t d_model = 64;
    std::size_t d_out = 32;
    std::size_t d_state = 16;
};

/// Level i (1-based) sees the embedding mean-pooled with stride 2^(i-1).
struct LevelSpec {
    std::size_t index = 1;
    std::size_t stride = 1;
    std::size_t d_model = 64;
    std::size_t d_out = 32;

    std::size_t pooled_length(std::size_t lookback) const { return (lookback + stride - 1) / stride; }
};

LevelSpec level_spec(std::size_t index, const MambaConfig& config);
/// Rank of the low-rank step-size projection.
std::size_t dt_rank(std::size_t d_model);

/// Parameters of one level: the level projection, the selective SSM and the
/// re-level projection to the shared output width.
template <class T>
struct LevelWeights {
    T in_proj;   // [d_model, 2F]
    T dt_down;   // [r, d_model]
    T dt_up;     // [d_model, r]
    T dt_bias;   // [d_model]
    T a_log;     // [d_model, d_state]; A = -exp(a_log)
    T b_proj;    // [d_state, d_model]
    T c_proj;    // [d_state, d_model]
    T gate;      // [d_model, d_model]
    T out_proj;  // [d_model, d_model]
    T relevel;   // [d_out, d_model]

    template <class Self, class F>
    static void each(Self& self, const std::string& prefix, F&& f) {
        f(prefix + ".in_proj", self.in_proj);
        f(prefix + ".dt_down", self.dt_down);
        f(prefix + ".dt_up", self.dt_up);
        f(prefix + ".dt_bias", self.dt_bias);
        f(prefix + ".a_log", self.a_log);
        f(prefix + ".b_proj", self.b_proj);
        f(prefix + ".c_proj", self.c_proj);
        f(prefix + ".gate", self.gate);
        f(prefix + ".out_proj", self.out_proj);
        f(prefix + ".relevel", self.relevel);
    }
};

using SsmParams = LevelWeights<Tensor>;

template <class T>
struct HeadWeights {
    T weight;  // [1, k * d_out]
    T bias;    // [1]

    template <class Self, class F>
    static void each(Self& self, F&& f) {
        f(std::string("head.weight"), self.weight);
        f(std::string("head.bias"), self.bias);
    }
};

using ScoreHead = HeadWeights<Tensor>;

SsmParams init_level(std::mt19937_64& rng, const LevelSpec& spec, std::size_t embed_width, std::size_t d_state);
ScoreHead init_head(std::mt19937_64& rng, std::size_t levels, std::size_t d_out);

/// Switches used to isolate the recurrence in tests.
struct ScanOptions {
    bool gate = true;
    bool out_proj = true;
};

// ---- tape ops ------------------------------------------------------------------

ad::Var level_project(ad::Tape& tape, ad::Var embedding, ad::Var in_proj, const LevelSpec& spec);

/// Fused recurrence; a_log is [D, S] and A = -exp(a_log).
ad::Var selective_scan(ad::Tape& tape, ad::Var x, ad::Var delta, ad::Var a_log, ad::Var b, ad::Var c);

/// Step sizes, input/output maps, scan, gate and output projection.
ad::Var ssm_block(ad::Tape& tape, ad::Var x, const LevelWeights<ad::Var>& w, const ScanOptions& options = {});

/// Final-step features of one level after the residual and re-level projection: [N, d_out].
ad::Var level_features(ad::Tape& tape, ad::Var embedding, const LevelWeights<ad::Var>& w, const LevelSpec& spec);

/// Concatenate per-level features and apply the head: one score per stock ([N, 1]).
ad::Var score(ad::Tape& tape, std::span<const ad::Var> per_level, const HeadWeights<ad::Var>& head);

// ---- plain wrappers ------------------------------------------------------------

Tensor level_project(const StockEmbedding& p, const SsmParams& params, const LevelSpec& spec);
Tensor selective_scan(const Tensor& x, const SsmParams& params, const ScanOptions& options = {});
/// Full multi-level read-out for one embedding.
std::vector<double> score(const StockEmbedding& p, const std::vector<SsmParams>& levels,
                          const std::vector<LevelSpec>& specs, const ScoreHead& head);

}  // namespace finmamba
