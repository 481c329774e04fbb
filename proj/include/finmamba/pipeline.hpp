#pragma once

#include <span>
#include <string>
#include <vector>

#include "finmamba/backtest.hpp"
#include "finmamba/gatagg.hpp"
#include "finmamba/trainer.hpp"

namespace finmamba {

/// Model outputs and realised holding-period returns for a run of days.
struct SplitScores {
    std::vector<std::size_t> windows;  // indices into Dataset::days
    std::vector<std::string> dates;    // decision dates
    Tensor scores;                     // [T, N]
    Tensor returns;                    // [T, N]
    std::vector<double> kappas;
    std::vector<std::size_t> retained_edges;
};

/// `execution` = "close" uses the next-day close-to-close label; "open" uses
/// open(t+2)/open(t+1) - 1 and drops days without a t+2 open.
SplitScores score_split(const ModelParams& params, const Dataset& data, std::span<const std::size_t> windows,
                        const std::string& execution = "close");

BacktestReport run_backtest(const SplitScores& split, const Dataset& data, std::size_t k);

/// Equal-weight close index, 1.0 on the first panel day.
std::vector<double> index_level(const StockPanel& panel);

StockEmbedding embed(const ModelParams& params, const DayInput& input);

/// Cosine similarity between the flattened rows of two [N, ...] tensors.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

}  // namespace finmamba
