#include "finmamba/dyngraph.hpp"

#include <ostream>

#include "finmamba/errors.hpp"
#include "finmamba/kernels.hpp"

namespace finmamba {

std::size_t DailyGraph::retained_off_diagonal() const {
    const std::size_t n = nodes();
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && mask[i * n + j]) ++count;
    return count;
}

SimilarityMatrix spearman_matrix(const Tensor& series, std::size_t day) {
    if (series.rank() != 2) throw ContractError("spearman_matrix expects [N, L] series");
    if (series.dim(1) < 3) throw ContractError("spearman_matrix needs L >= 3");
    auto result = kernels::spearman_matrix(series);
    return SimilarityMatrix{std::move(result.q), day, std::move(result.constant_rows)};
}

SimilarityMatrix spearman_matrix(const Window& window) {
    const std::size_t n = window.features.dim(0), len = window.features.dim(1);
    Tensor closes({n, len});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < len; ++l) closes(i, l) = window.features(i, l, kClose);
    return spearman_matrix(closes, window.day);
}

DecayMatrix decay_matrix(const IndustryMap& industry, const std::vector<std::string>& tickers) {
    validate_industry(industry, tickers);
    const std::size_t n = tickers.size();
    DecayMatrix out{Tensor({n, n})};
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = industry.assignments.at(tickers[i]);
        for (std::size_t j = 0; j < n; ++j) {
            const auto& b = industry.assignments.at(tickers[j]);
            if (i == j || a.secondary == b.secondary)
                out.d(i, j) = 1.0;
            else if (a.primary == b.primary)
                out.d(i, j) = industry.delta1;
            else
                out.d(i, j) = industry.delta2;
        }
    }
    return out;
}

Tensor combine_adjacency(const SimilarityMatrix& q, const DecayMatrix& d) {
    if (!q.q.same_shape(d.d)) throw ContractError("combine_adjacency: shape mismatch");
    Tensor a = q.q;
    for (std::size_t k = 0; k < a.size(); ++k) a[k] *= d.d[k];
    return a;
}

void write_graph_csv(std::ostream& out, const DailyGraph& graph) {
    const std::size_t n = graph.nodes();
    out << "i,j,weight,retained\n";
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out << i << ',' << j << ',' << graph.adjacency(i, j) << ',' << (graph.retained(i, j) ? 1 : 0) << '\n';
}

}  // namespace finmamba
