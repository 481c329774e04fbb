#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "finmamba/panel.hpp"
#include "finmamba/tensor.hpp"

namespace finmamba {

/// Pairwise rank correlation of close prices over one lookback window.
struct SimilarityMatrix {
    Tensor q;  // [N, N], symmetric, unit diagonal
    std::size_t day = 0;
    /// Stocks whose close series is constant over the window; their
    /// similarity to every other stock is reported as 0.
    std::vector<std::size_t> constant_series;
};

/// Prior per-pair decay from shared industry membership.
struct DecayMatrix {
    Tensor d;  // [N, N], entries in {1, delta1, delta2}
};

struct DailyGraph {
    Tensor adjacency;                 // [N, N]
    std::vector<unsigned char> mask;  // [N * N], row-major; diagonal always set
    double kappa = 0.0;
    std::size_t day = 0;

    std::size_t nodes() const { return adjacency.empty() ? 0 : adjacency.dim(0); }
    bool retained(std::size_t i, std::size_t j) const { return mask[i * nodes() + j] != 0; }
    std::size_t retained_off_diagonal() const;
};

SimilarityMatrix spearman_matrix(const Window& window);
/// Same as above on raw [N, L] series.
SimilarityMatrix spearman_matrix(const Tensor& series, std::size_t day = 0);

DecayMatrix decay_matrix(const IndustryMap& industry, const std::vector<std::string>& tickers);

/// Elementwise product Q ∘ D.
Tensor combine_adjacency(const SimilarityMatrix& q, const DecayMatrix& d);

/// Writes `i,j,weight,retained` rows for every ordered pair.
void write_graph_csv(std::ostream& out, const DailyGraph& graph);

}  // namespace finmamba
