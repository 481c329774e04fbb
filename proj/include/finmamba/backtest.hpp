#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "finmamba/tensor.hpp"

namespace finmamba {

inline constexpr double kTradingDays = 252.0;

/// Annualised summary of a daily return path. Ratios whose denominator is
/// zero are left empty and serialised as "undefined".
struct Metrics {
    double arr = 0.0;
    double avol = 0.0;
    double mdd = 0.0;
    std::optional<double> asr;
    std::optional<double> ir;
    std::optional<double> cr;
};

struct BacktestReport {
    std::vector<double> portfolio_returns;
    std::vector<double> benchmark_returns;
    std::vector<double> equity;  // cumulative product of 1 + R_p
    std::vector<std::vector<std::string>> holdings;
    std::vector<std::string> warnings;
    Metrics metrics;
};

/// Equal-weight top-k portfolio per day from [T, N] scores and the returns
/// earned by holding each stock over that day's holding period. NaN scores
/// are skipped; ties go to the lexicographically smaller ticker.
BacktestReport simulate(const Tensor& scores, const Tensor& returns, std::size_t k,
                        const std::vector<std::string>& tickers);

/// Most negative peak-to-trough move of an equity path, as a fraction (<= 0).
double max_drawdown(std::span<const double> equity);

Metrics compute_metrics(std::span<const double> portfolio, std::span<const double> benchmark);

void write_metrics_json(std::ostream& out, const Metrics& m);
/// `day,date,portfolio_return,benchmark_return,equity`
void write_equity_csv(std::ostream& out, const BacktestReport& report, const std::vector<std::string>& dates);
/// `date,rank,ticker`
void write_holdings_csv(std::ostream& out, const BacktestReport& report, const std::vector<std::string>& dates);

}  // namespace finmamba
