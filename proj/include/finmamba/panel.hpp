#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "finmamba/tensor.hpp"

namespace finmamba {

inline constexpr std::size_t kFeatureCount = 6;
/// Feature order of the panel's last axis; matches the CSV column order.
enum Feature : std::size_t { kClose = 0, kOpen, kHigh, kLow, kTurnover, kVolume };

struct StockPanel {
    std::vector<std::string> tickers;   // sorted, unique
    std::vector<std::string> calendar;  // ISO dates, strictly increasing
    Tensor values;                      // [N, T, F]

    std::size_t stocks() const { return tickers.size(); }
    std::size_t days() const { return calendar.size(); }
    double at(std::size_t stock, std::size_t day, Feature f) const { return values(stock, day, f); }
};

struct IndustryAssignment {
    std::string primary;
    std::string secondary;
};

struct IndustryMap {
    std::map<std::string, IndustryAssignment> assignments;
    double delta1 = 0.5;
    double delta2 = 0.1;
};

enum class MissingPolicy { reject, forward_fill };

struct PanelConfig {
    MissingPolicy missing = MissingPolicy::reject;
    std::size_t max_fill_days = 3;
    double delta1 = 0.5;
    double delta2 = 0.1;
};

/// Lookback block ending at `day` with next-day close-to-close labels.
struct Window {
    std::size_t day = 0;
    Tensor features;               // [N, L, F]
    std::vector<double> returns;   // [N], (p^{t+1} - p^t) / p^t
};

struct MarketIndexWindow {
    Tensor values;  // [1, L, F]
};

/// Throws ValidationError if the panel breaks any price or shape invariant.
void validate_panel(const StockPanel& panel);
void validate_industry(const IndustryMap& industry, const std::vector<std::string>& tickers);

std::pair<StockPanel, IndustryMap> load_panel(std::istream& panel_csv, std::istream& industry_csv,
                                              const PanelConfig& config = {});
std::pair<StockPanel, IndustryMap> load_panel_files(const std::string& panel_path, const std::string& industry_path,
                                                    const PanelConfig& config = {});

void write_panel_csv(std::ostream& out, const StockPanel& panel);
void write_industry_csv(std::ostream& out, const StockPanel& panel, const IndustryMap& industry);

/// Window ending at `day` (0-based); needs day >= L-1 and day+1 < T.
Window make_window(const StockPanel& panel, std::size_t day, std::size_t lookback);
/// All T-L windows, ordered by day.
std::vector<Window> make_windows(const StockPanel& panel, std::size_t lookback);

MarketIndexWindow market_index(const Window& window);

/// Per-stock, per-feature z-score fitted on a day range of the panel.
class FeatureScaler {
public:
    FeatureScaler() = default;
    /// Statistics over days [first, last).
    static FeatureScaler fit(const StockPanel& panel, std::size_t first, std::size_t last);

    Window apply(const Window& window) const;
    double transform(std::size_t stock, Feature f, double value) const;

    const Tensor& mean() const { return mean_; }
    const Tensor& scale() const { return scale_; }

private:
    Tensor mean_;   // [N, F]
    Tensor scale_;  // [N, F]
};

// ---- synthetic generator ----------------------------------------------------

struct RegimeSegment {
    std::size_t begin = 0;  // first day
    std::size_t end = 0;    // one past the last day
    double drift = 0.0;     // mean daily market return
    double market_vol = 0.01;
};

struct RegimeConfig {
    /// Empty means: rising first half, falling second half.
    std::vector<RegimeSegment> segments;
    double industry_vol = 0.006;
    double noise_vol = 0.012;
    double beta_spread = 0.3;
    std::size_t primary_industries = 3;
    std::size_t secondary_per_primary = 2;
    double delta1 = 0.5;
    double delta2 = 0.1;
};

/// Segments actually used for a T-day panel (defaults filled in, bounds checked).
std::vector<RegimeSegment> resolve_regimes(const RegimeConfig& config, std::size_t days);

std::pair<StockPanel, IndustryMap> gen_synthetic(std::uint64_t seed, std::size_t stocks, std::size_t days,
                                                 const RegimeConfig& config = {});

/// ISO date `offset` business days after 2020-01-02.
std::string business_day(std::size_t offset);

}  // namespace finmamba
