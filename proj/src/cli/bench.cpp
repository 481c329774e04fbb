#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "finmamba/cli.hpp"
#include "finmamba/errors.hpp"
#include "finmamba/kernels.hpp"

namespace finmamba::cli {

namespace {

template <class F>
double median_ms(std::size_t reps, F&& f) {
    std::vector<double> times;
    for (std::size_t r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
    return times[times.size() / 2];
}

bool all_finite(const Tensor& t) {
    return std::all_of(t.storage().begin(), t.storage().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchSettings& s) {
    if (s.grid.size() < 2) throw ConfigError("bench grid needs at least two lookback values");
    if (s.repetitions == 0 || s.stocks == 0 || s.d_model == 0 || s.d_state == 0)
        throw ConfigError("bench sizes must be positive");
    const int saved_threads = omp_get_max_threads();
    omp_set_num_threads(1);

    std::mt19937_64 rng(s.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.001, 0.1);
    Tensor a({s.d_model, s.d_state});
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = -static_cast<double>(i % s.d_state + 1);

    std::vector<BenchRow> rows;
    for (std::size_t len : s.grid) {
        if (len == 0) throw ConfigError("bench lookback must be positive");
        Tensor x({s.stocks, len, s.d_model}), delta({s.stocks, len, s.d_model});
        Tensor b({s.stocks, len, s.d_state}), c({s.stocks, len, s.d_state});
        for (double& v : x.storage()) v = normal(rng);
        for (double& v : delta.storage()) v = uniform(rng);
        for (double& v : b.storage()) v = normal(rng);
        for (double& v : c.storage()) v = normal(rng);
        const kernels::ScanInputs in{x, delta, a, b, c};

        BenchRow row;
        row.lookback = len;
        Tensor scan_out, attn_out;
        row.scan_ms = median_ms(s.repetitions, [&] { scan_out = kernels::selective_scan(in); });
        row.attention_ms = median_ms(s.repetitions, [&] { attn_out = kernels::dense_attention(x); });
        row.scan_peak_bytes = kernels::selective_scan_workspace_bytes(s.stocks, len, s.d_model, s.d_state);
        row.attention_peak_bytes = kernels::dense_attention_workspace_bytes(s.stocks, len, s.d_model);
        row.finite = all_finite(scan_out) && all_finite(attn_out);
        rows.push_back(row);
    }
    omp_set_num_threads(saved_threads);
    return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "L,scan_ms,attention_ms,scan_peak_bytes,attention_peak_bytes\n";
    for (const auto& r : rows)
        out << r.lookback << ',' << r.scan_ms << ',' << r.attention_ms << ',' << r.scan_peak_bytes << ','
            << r.attention_peak_bytes << '\n';
}

}  // namespace finmamba::cli
