#include "finmamba/pipeline.hpp"

#include <cmath>

#include "finmamba/errors.hpp"

namespace finmamba {

SplitScores score_split(const ModelParams& params, const Dataset& data, std::span<const std::size_t> windows,
                        const std::string& execution) {
    if (execution != "close" && execution != "open") throw ConfigError("execution must be 'close' or 'open'");
    const std::size_t n = data.panel.stocks();
    SplitScores out;
    for (std::size_t w : windows) {
        const std::size_t day = data.days.at(w).day;
        if (execution == "open" && day + 2 >= data.panel.days()) continue;
        out.windows.push_back(w);
    }
    const std::size_t t = out.windows.size();
    out.scores = Tensor({t, n});
    out.returns = Tensor({t, n});
    out.kappas.resize(t);
    out.retained_edges.resize(t);
    out.dates.resize(t);
    const auto count = static_cast<std::ptrdiff_t>(t);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < count; ++k) {
        const DayInput& in = data.days[out.windows[k]];
        const Prediction p = predict(in, params);
        for (std::size_t i = 0; i < n; ++i) {
            out.scores(k, i) = p.scores[i];
            if (execution == "close") {
                out.returns(k, i) = in.returns[i];
            } else {
                const double o1 = data.panel.at(i, in.day + 1, kOpen), o2 = data.panel.at(i, in.day + 2, kOpen);
                out.returns(k, i) = (o2 - o1) / o1;
            }
        }
        out.kappas[k] = p.kappa;
        out.retained_edges[k] = p.graph.retained_off_diagonal();
        out.dates[k] = data.panel.calendar[in.day];
    }
    return out;
}

BacktestReport run_backtest(const SplitScores& split, const Dataset& data, std::size_t k) {
    return simulate(split.scores, split.returns, k, data.panel.tickers);
}

std::vector<double> index_level(const StockPanel& panel) {
    std::vector<double> level(panel.days(), 1.0);
    for (std::size_t d = 1; d < panel.days(); ++d) {
        double r = 0.0;
        for (std::size_t i = 0; i < panel.stocks(); ++i)
            r += panel.at(i, d, kClose) / panel.at(i, d - 1, kClose) - 1.0;
        level[d] = level[d - 1] * (1.0 + r / static_cast<double>(panel.stocks()));
    }
    return level;
}

StockEmbedding embed(const ModelParams& params, const DayInput& input) {
    const Prediction p = predict(input, params);
    return build_embedding(input.features, p.z, input.day);
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ContractError("cosine_similarity: shape mismatch");
    const std::size_t n = a.dim(0), m = a.size() / n;
    Tensor out({n, n});
    std::vector<double> na(n), nb(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t e = 0; e < m; ++e) {
            na[i] += a[i * m + e] * a[i * m + e];
            nb[i] += b[i * m + e] * b[i * m + e];
        }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t e = 0; e < m; ++e) dot += a[i * m + e] * b[j * m + e];
            const double denom = std::sqrt(na[i] * nb[j]);
            out(i, j) = denom > 0.0 ? dot / denom : 0.0;
        }
    return out;
}

}  // namespace finmamba
