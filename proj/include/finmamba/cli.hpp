#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace finmamba::cli {

/// Entry point shared by the `finmamba` executable and the tests.
/// Returns the process exit code; errors are reported on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct BenchRow {
    std::size_t lookback = 0;
    double scan_ms = 0.0;
    double attention_ms = 0.0;
    std::size_t scan_peak_bytes = 0;
    std::size_t attention_peak_bytes = 0;
    bool finite = true;
};

struct BenchSettings {
    std::vector<std::size_t> grid{20, 40, 80, 160};
    std::size_t repetitions = 7;
    std::size_t stocks = 16;
    std::size_t d_model = 64;
    std::size_t d_state = 16;
    std::uint64_t seed = 1;
};

/// Median-of-repetitions timing of the selective scan against a dense
/// attention reference on identical [N, L, D] inputs, one worker thread.
std::vector<BenchRow> run_bench(const BenchSettings& settings);
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

using Series = std::pair<std::string, std::vector<double>>;

/// Minimal line chart: one polyline per series over a shared x axis.
void write_line_svg(std::ostream& out, const std::string& title, const std::vector<Series>& series);

}  // namespace finmamba::cli
