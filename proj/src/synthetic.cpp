#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "finmamba/errors.hpp"
#include "finmamba/panel.hpp"

namespace finmamba {

namespace {

// Days since 1970-01-01 -> civil date (proleptic Gregorian).
std::string civil_from_days(long z) {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const long doe = z - era * 146097;
    const long yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const long mp = (5 * doy + 2) / 153;
    const long d = doy - (153 * mp + 2) / 5 + 1;
    const long m = mp < 10 ? mp + 3 : mp - 9;
    const long y = yoe + era * 400 + (m <= 2 ? 1 : 0);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04ld-%02ld-%02ld", y, m, d);
    return buf;
}

}  // namespace

std::string business_day(std::size_t offset) {
    long day = 18263;  // 2020-01-02, a Thursday
    long weekday = 3;  // 0 = Monday
    for (std::size_t k = 0; k < offset; ++k) {
        do {
            ++day;
            weekday = (weekday + 1) % 7;
        } while (weekday >= 5);
    }
    return civil_from_days(day);
}

std::vector<RegimeSegment> resolve_regimes(const RegimeConfig& config, std::size_t days) {
    if (config.segments.empty()) {
        const std::size_t half = days / 2;
        return {RegimeSegment{0, half, 0.0015, 0.006}, RegimeSegment{half, days, -0.0025, 0.02}};
    }
    std::vector<RegimeSegment> segs = config.segments;
    std::sort(segs.begin(), segs.end(), [](const auto& a, const auto& b) { return a.begin < b.begin; });
    std::size_t cursor = 0;
    for (const auto& s : segs) {
        if (s.begin != cursor || s.end <= s.begin || s.end > days)
            throw ConfigError("regime segments must tile [0, " + std::to_string(days) + ") without gaps");
        if (!(s.market_vol >= 0.0) || !std::isfinite(s.drift)) throw ConfigError("regime volatility must be >= 0");
        cursor = s.end;
    }
    if (cursor != days) throw ConfigError("regime segments stop before the last day");
    return segs;
}

std::pair<StockPanel, IndustryMap> gen_synthetic(std::uint64_t seed, std::size_t stocks, std::size_t days,
                                                 const RegimeConfig& config) {
    if (stocks < 2) throw ConfigError("synthetic panel needs at least 2 stocks");
    if (days < 30) throw ConfigError("synthetic panel needs at least 30 days");
    if (config.primary_industries == 0 || config.secondary_per_primary == 0)
        throw ConfigError("industry counts must be positive");
    if (config.noise_vol < 0 || config.industry_vol < 0 || config.beta_spread < 0 || config.beta_spread >= 1)
        throw ConfigError("volatilities must be >= 0 and beta_spread in [0, 1)");
    const auto regimes = resolve_regimes(config, days);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    StockPanel panel;
    IndustryMap industry;
    industry.delta1 = config.delta1;
    industry.delta2 = config.delta2;
    const std::size_t np = config.primary_industries, ns = config.secondary_per_primary;
    std::vector<double> beta(stocks), start(stocks);
    std::vector<std::size_t> prim(stocks), sec(stocks);
    for (std::size_t i = 0; i < stocks; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "S%03zu", i);
        panel.tickers.emplace_back(name);
        prim[i] = i % np;
        sec[i] = prim[i] * ns + (i / np) % ns;
        industry.assignments[name] = {"P" + std::to_string(prim[i]),
                                      "P" + std::to_string(prim[i]) + "." + std::to_string(sec[i] % ns)};
        beta[i] = 1.0 + config.beta_spread * (2.0 * unit(rng) - 1.0);
        start[i] = 10.0 + 90.0 * unit(rng);
    }
    for (std::size_t d = 0; d < days; ++d) panel.calendar.push_back(business_day(d));
    panel.values = Tensor({stocks, days, kFeatureCount});

    std::vector<double> close = start;
    std::vector<double> prim_factor(np), sec_factor(np * ns);
    std::size_t seg = 0;
    for (std::size_t d = 0; d < days; ++d) {
        while (d >= regimes[seg].end) ++seg;
        const auto& r = regimes[seg];
        const double market = r.drift + r.market_vol * gauss(rng);
        for (double& f : prim_factor) f = config.industry_vol * gauss(rng);
        for (double& f : sec_factor) f = config.industry_vol * gauss(rng);
        for (std::size_t i = 0; i < stocks; ++i) {
            double ret = beta[i] * market + prim_factor[prim[i]] + sec_factor[sec[i]] + config.noise_vol * gauss(rng);
            ret = std::max(ret, -0.5);
            const double prev = close[i];
            const double today = d == 0 ? prev : prev * (1.0 + ret);
            const double open = prev * (1.0 + 0.25 * config.noise_vol * gauss(rng));
            const double hi = std::max(open, today) * (1.0 + std::abs(0.3 * config.noise_vol * gauss(rng)));
            const double lo = std::min(open, today) * (1.0 - std::abs(0.3 * config.noise_vol * gauss(rng)));
            const double volume = std::round(std::exp(13.0 + 0.3 * gauss(rng)) * (1.0 + 20.0 * std::abs(ret)));
            close[i] = today;
            panel.values(i, d, kClose) = today;
            panel.values(i, d, kOpen) = open > 0 ? open : today;
            panel.values(i, d, kHigh) = std::max({hi, panel.values(i, d, kOpen), today});
            panel.values(i, d, kLow) = std::min({lo, panel.values(i, d, kOpen), today});
            panel.values(i, d, kVolume) = volume;
            panel.values(i, d, kTurnover) = volume * today;
        }
    }
    validate_panel(panel);
    return {std::move(panel), std::move(industry)};
}

}  // namespace finmamba
