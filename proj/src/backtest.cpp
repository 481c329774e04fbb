#include "finmamba/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "finmamba/errors.hpp"

namespace finmamba {

namespace {

double mean(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_std(std::span<const double> x) {
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (*lo == *hi) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

}  // namespace

BacktestReport simulate(const Tensor& scores, const Tensor& returns, std::size_t k,
                        const std::vector<std::string>& tickers) {
    if (scores.rank() != 2 || !scores.same_shape(returns))
        throw ContractError("scores and returns must both be [T, N]");
    const std::size_t days = scores.dim(0), n = scores.dim(1);
    if (k == 0 || k > n) throw ConfigError("top-k must be in 1..N (k=" + std::to_string(k) + ", N=" + std::to_string(n) + ")");
    if (!tickers.empty() && tickers.size() != n) throw ContractError("ticker list does not match N");
    auto label = [&](std::size_t i) { return tickers.empty() ? std::to_string(i) : tickers[i]; };

    BacktestReport r;
    double equity = 1.0;
    std::vector<std::size_t> order;
    for (std::size_t t = 0; t < days; ++t) {
        order.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (std::isnan(scores(t, i)))
                r.warnings.push_back("day " + std::to_string(t) + ": NaN score for " + label(i) + " excluded");
            else
                order.push_back(i);
        }
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores(t, a) != scores(t, b)) return scores(t, a) > scores(t, b);
            return label(a) < label(b);
        });
        const std::size_t held = std::min(k, order.size());
        if (held < k) r.warnings.push_back("day " + std::to_string(t) + ": only " + std::to_string(held) + " valid scores");
        std::vector<std::string> names;
        for (std::size_t h = 0; h < held; ++h) names.push_back(label(order[h]));
        std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
        double rp = 0.0;
        for (std::size_t h = 0; h < held; ++h) rp += returns(t, order[h]);
        if (held > 0) rp /= static_cast<double>(held);
        double rb = 0.0;
        for (std::size_t i = 0; i < n; ++i) rb += returns(t, i);
        rb /= static_cast<double>(n);
        equity *= 1.0 + rp;
        r.portfolio_returns.push_back(rp);
        r.benchmark_returns.push_back(rb);
        r.equity.push_back(equity);
        r.holdings.push_back(std::move(names));
    }
    if (days >= 2) r.metrics = compute_metrics(r.portfolio_returns, r.benchmark_returns);
    return r;
}

double max_drawdown(std::span<const double> equity) {
    double peak = -std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (double v : equity) {
        peak = std::max(peak, v);
        if (peak > 0.0) worst = std::max(worst, (peak - v) / peak);
    }
    return -worst;
}

Metrics compute_metrics(std::span<const double> portfolio, std::span<const double> benchmark) {
    if (portfolio.size() < 2) throw ContractError("metrics need at least 2 daily returns");
    if (benchmark.size() != portfolio.size()) throw ContractError("benchmark length differs from portfolio");
    Metrics m;
    std::vector<double> path{1.0};
    double growth = 1.0;
    for (double r : portfolio) {
        growth *= 1.0 + r;
        path.push_back(growth);
    }
    const double years = static_cast<double>(portfolio.size()) / kTradingDays;
    m.arr = std::pow(growth, 1.0 / years) - 1.0;  // growth = 1 + total return
    m.avol = sample_std(portfolio) * std::sqrt(kTradingDays);
    m.mdd = max_drawdown(path);
    if (m.avol > 0.0) m.asr = m.arr / m.avol;
    std::vector<double> excess(portfolio.size());
    for (std::size_t t = 0; t < excess.size(); ++t) excess[t] = portfolio[t] - benchmark[t];
    const double te = sample_std(excess);
    if (te > 0.0) m.ir = mean(excess) / te * std::sqrt(kTradingDays);
    if (m.mdd < 0.0) m.cr = m.arr / std::abs(m.mdd);
    return m;
}

void write_metrics_json(std::ostream& out, const Metrics& m) {
    auto opt = [](const std::optional<double>& v) -> nlohmann::json {
        if (v && std::isfinite(*v)) return *v;
        return "undefined";
    };
    auto num = [](double v) -> nlohmann::json {
        if (std::isfinite(v)) return v;
        return "undefined";
    };
    nlohmann::json j = {{"arr", num(m.arr)}, {"avol", num(m.avol)}, {"mdd", num(m.mdd)},
                        {"asr", opt(m.asr)}, {"ir", opt(m.ir)},     {"cr", opt(m.cr)}};
    out << j.dump(2) << '\n';
}

void write_equity_csv(std::ostream& out, const BacktestReport& report, const std::vector<std::string>& dates) {
    out << "day,date,portfolio_return,benchmark_return,equity\n" << std::setprecision(17);
    for (std::size_t t = 0; t < report.equity.size(); ++t)
        out << t << ',' << (t < dates.size() ? dates[t] : "") << ',' << report.portfolio_returns[t] << ','
            << report.benchmark_returns[t] << ',' << report.equity[t] << '\n';
}

void write_holdings_csv(std::ostream& out, const BacktestReport& report, const std::vector<std::string>& dates) {
    out << "date,rank,ticker\n";
    for (std::size_t t = 0; t < report.holdings.size(); ++t)
        for (std::size_t h = 0; h < report.holdings[t].size(); ++h)
            out << (t < dates.size() ? dates[t] : "") << ',' << h + 1 << ',' << report.holdings[t][h] << '\n';
}

}  // namespace finmamba
