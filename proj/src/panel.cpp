#include "finmamba/panel.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "finmamba/errors.hpp"

namespace finmamba {

namespace {

constexpr const char* kPanelHeader = "date,ticker,close,open,high,low,turnover,volume";
constexpr const char* kIndustryHeader = "ticker,primary,secondary";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

bool is_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
        if (s[i] < '0' || s[i] > '9') return false;
    const int month = std::stoi(s.substr(5, 2)), day = std::stoi(s.substr(8, 2));
    return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

double parse_number(const std::string& cell, std::size_t line_no, const char* column) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + column + " value '" + cell + "'");
    }
    return v;
}

struct Row {
    std::array<double, kFeatureCount> f{};
    std::size_t line = 0;
};

}  // namespace

void validate_panel(const StockPanel& panel) {
    const std::size_t n = panel.stocks(), t = panel.days();
    if (n < 2) throw ValidationError("panel needs at least 2 tickers");
    if (panel.values.shape() != std::vector<std::size_t>{n, t, kFeatureCount})
        throw ValidationError("panel values must be [N, T, 6]");
    if (std::set<std::string>(panel.tickers.begin(), panel.tickers.end()).size() != n)
        throw ValidationError("duplicate tickers in panel");
    for (std::size_t d = 1; d < t; ++d)
        if (!(panel.calendar[d - 1] < panel.calendar[d]))
            throw ValidationError("calendar not strictly increasing at " + panel.calendar[d]);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < t; ++d) {
            const double c = panel.at(i, d, kClose), o = panel.at(i, d, kOpen);
            const double h = panel.at(i, d, kHigh), l = panel.at(i, d, kLow);
            const std::string where = panel.tickers[i] + " on " + panel.calendar[d];
            if (!(c > 0 && o > 0 && h > 0 && l > 0)) throw ValidationError("non-positive price for " + where);
            if (h < std::max(o, c)) throw ValidationError("high below max(open, close) for " + where);
            if (l > std::min(o, c)) throw ValidationError("low above min(open, close) for " + where);
            if (panel.at(i, d, kTurnover) < 0 || panel.at(i, d, kVolume) < 0)
                throw ValidationError("negative turnover/volume for " + where);
        }
}

void validate_industry(const IndustryMap& industry, const std::vector<std::string>& tickers) {
    if (!(industry.delta2 >= 0.0 && industry.delta2 <= industry.delta1 && industry.delta1 <= 1.0))
        throw ValidationError("industry decay needs 0 <= delta2 <= delta1 <= 1");
    std::string missing;
    for (const auto& t : tickers)
        if (!industry.assignments.contains(t)) missing += (missing.empty() ? "" : ", ") + t;
    if (!missing.empty()) throw ValidationError("tickers without industry assignment: " + missing);
}

std::pair<StockPanel, IndustryMap> load_panel(std::istream& panel_csv, std::istream& industry_csv,
                                              const PanelConfig& config) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(panel_csv, line) || strip_cr(line) != kPanelHeader)
        throw ParseError(std::string("line 1: panel header must be '") + kPanelHeader + "'");

    std::map<std::string, std::map<std::string, Row>> by_ticker;  // ticker -> date -> row
    std::set<std::string> dates;
    while (std::getline(panel_csv, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 8)
            throw ParseError("line " + std::to_string(line_no) + ": expected 8 columns, got " +
                             std::to_string(cells.size()));
        if (!is_iso_date(cells[0]))
            throw ParseError("line " + std::to_string(line_no) + ": bad date '" + cells[0] + "'");
        if (cells[1].empty()) throw ParseError("line " + std::to_string(line_no) + ": empty ticker");
        Row row;
        row.line = line_no;
        static constexpr const char* names[] = {"close", "open", "high", "low", "turnover", "volume"};
        for (std::size_t f = 0; f < kFeatureCount; ++f) row.f[f] = parse_number(cells[2 + f], line_no, names[f]);
        for (std::size_t f = 0; f < 4; ++f)
            if (row.f[f] <= 0.0)
                throw ValidationError(std::string("non-positive ") + names[f] + " for " + cells[1] + " on " +
                                      cells[0] + " (line " + std::to_string(line_no) + ")");
        auto& per_date = by_ticker[cells[1]];
        if (!per_date.emplace(cells[0], row).second)
            throw ValidationError("duplicate row for " + cells[1] + " on " + cells[0] + " (line " +
                                  std::to_string(line_no) + ")");
        dates.insert(cells[0]);
    }

    StockPanel panel;
    for (const auto& [ticker, _] : by_ticker) panel.tickers.push_back(ticker);
    panel.calendar.assign(dates.begin(), dates.end());
    const std::size_t n = panel.tickers.size(), t = panel.calendar.size();
    panel.values = Tensor({n, t, kFeatureCount});
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rows = by_ticker[panel.tickers[i]];
        std::size_t gap = 0;
        for (std::size_t d = 0; d < t; ++d) {
            auto it = rows.find(panel.calendar[d]);
            if (it != rows.end()) {
                gap = 0;
                for (std::size_t f = 0; f < kFeatureCount; ++f) panel.values(i, d, f) = it->second.f[f];
                continue;
            }
            ++gap;
            // d >= gap means an observed row precedes this run of missing days
            const bool can_fill =
                config.missing == MissingPolicy::forward_fill && gap <= config.max_fill_days && d >= gap;
            if (!can_fill)
                throw ValidationError("missing row for " + panel.tickers[i] + " on " + panel.calendar[d]);
            for (std::size_t f = 0; f < kFeatureCount; ++f) panel.values(i, d, f) = panel.values(i, d - 1, f);
        }
    }

    IndustryMap industry;
    industry.delta1 = config.delta1;
    industry.delta2 = config.delta2;
    std::size_t ind_line = 1;
    if (!std::getline(industry_csv, line) || strip_cr(line) != kIndustryHeader)
        throw ParseError(std::string("industry line 1: header must be '") + kIndustryHeader + "'");
    while (std::getline(industry_csv, line)) {
        ++ind_line;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 3 || cells[0].empty() || cells[1].empty() || cells[2].empty())
            throw ParseError("industry line " + std::to_string(ind_line) + ": expected ticker,primary,secondary");
        if (!industry.assignments.emplace(cells[0], IndustryAssignment{cells[1], cells[2]}).second)
            throw ValidationError("duplicate industry row for " + cells[0]);
    }

    validate_panel(panel);
    validate_industry(industry, panel.tickers);
    return {std::move(panel), std::move(industry)};
}

std::pair<StockPanel, IndustryMap> load_panel_files(const std::string& panel_path, const std::string& industry_path,
                                                    const PanelConfig& config) {
    std::ifstream p(panel_path), ind(industry_path);
    if (!p) throw ParseError("cannot open panel file " + panel_path);
    if (!ind) throw ParseError("cannot open industry file " + industry_path);
    return load_panel(p, ind, config);
}

void write_panel_csv(std::ostream& out, const StockPanel& panel) {
    out << kPanelHeader << '\n';
    out << std::setprecision(17);
    for (std::size_t d = 0; d < panel.days(); ++d)
        for (std::size_t i = 0; i < panel.stocks(); ++i) {
            out << panel.calendar[d] << ',' << panel.tickers[i];
            for (std::size_t f = 0; f < kFeatureCount; ++f) out << ',' << panel.values(i, d, f);
            out << '\n';
        }
}

void write_industry_csv(std::ostream& out, const StockPanel& panel, const IndustryMap& industry) {
    out << kIndustryHeader << '\n';
    for (const auto& t : panel.tickers) {
        const auto& a = industry.assignments.at(t);
        out << t << ',' << a.primary << ',' << a.secondary << '\n';
    }
}

Window make_window(const StockPanel& panel, std::size_t day, std::size_t lookback) {
    const std::size_t n = panel.stocks();
    if (lookback == 0 || day + 1 < lookback || day + 1 >= panel.days())
        throw InsufficientHistoryError("window at day " + std::to_string(day) + " with lookback " +
                                       std::to_string(lookback) + " is outside the panel");
    Window w;
    w.day = day;
    w.features = Tensor({n, lookback, kFeatureCount});
    w.returns.resize(n);
    const std::size_t first = day + 1 - lookback;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < lookback; ++l)
            for (std::size_t f = 0; f < kFeatureCount; ++f) w.features(i, l, f) = panel.values(i, first + l, f);
        const double p0 = panel.at(i, day, kClose), p1 = panel.at(i, day + 1, kClose);
        w.returns[i] = (p1 - p0) / p0;
    }
    return w;
}

std::vector<Window> make_windows(const StockPanel& panel, std::size_t lookback) {
    if (lookback == 0) throw ConfigError("lookback must be positive");
    if (panel.days() < lookback + 1)
        throw InsufficientHistoryError("panel has " + std::to_string(panel.days()) + " days, lookback " +
                                       std::to_string(lookback) + " needs at least " +
                                       std::to_string(lookback + 1));
    const std::size_t count = panel.days() - lookback;
    std::vector<Window> out(count);
    const auto cnt = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < cnt; ++k)
        out[k] = make_window(panel, static_cast<std::size_t>(k) + lookback - 1, lookback);
    return out;
}

MarketIndexWindow market_index(const Window& window) {
    const std::size_t n = window.features.dim(0), len = window.features.dim(1), f = window.features.dim(2);
    if (n == 0) throw ContractError("market index of an empty window");
    MarketIndexWindow m{Tensor({1, len, f})};
    for (std::size_t l = 0; l < len; ++l)
        for (std::size_t c = 0; c < f; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += window.features(i, l, c);
            m.values(0, l, c) = s / static_cast<double>(n);
        }
    return m;
}

FeatureScaler FeatureScaler::fit(const StockPanel& panel, std::size_t first, std::size_t last) {
    if (first >= last || last > panel.days()) throw ConfigError("scaler fit range is empty or out of bounds");
    FeatureScaler s;
    const std::size_t n = panel.stocks();
    s.mean_ = Tensor({n, kFeatureCount});
    s.scale_ = Tensor({n, kFeatureCount}, 1.0);
    const double count = static_cast<double>(last - first);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < kFeatureCount; ++f) {
            double m = 0.0;
            for (std::size_t d = first; d < last; ++d) m += panel.values(i, d, f);
            m /= count;
            double v = 0.0;
            for (std::size_t d = first; d < last; ++d) v += (panel.values(i, d, f) - m) * (panel.values(i, d, f) - m);
            const double sd = std::sqrt(v / count);
            s.mean_(i, f) = m;
            s.scale_(i, f) = sd > 1e-12 ? sd : 1.0;
        }
    return s;
}

double FeatureScaler::transform(std::size_t stock, Feature f, double value) const {
    return (value - mean_(stock, f)) / scale_(stock, f);
}

Window FeatureScaler::apply(const Window& window) const {
    Window out = window;
    const std::size_t n = window.features.dim(0), len = window.features.dim(1);
    if (mean_.empty() || mean_.dim(0) != n) throw ContractError("scaler was fitted on a different universe");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < len; ++l)
            for (std::size_t f = 0; f < kFeatureCount; ++f)
                out.features(i, l, f) = transform(i, static_cast<Feature>(f), window.features(i, l, f));
    return out;
}

}  // namespace finmamba
