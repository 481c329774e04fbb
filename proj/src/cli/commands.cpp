#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "finmamba/checkpoint.hpp"
#include "finmamba/cli.hpp"
#include "finmamba/config.hpp"
#include "finmamba/dyngraph.hpp"
#include "finmamba/errors.hpp"
#include "finmamba/marketaware.hpp"
#include "finmamba/pipeline.hpp"

namespace fs = std::filesystem;

namespace finmamba::cli {

namespace {

struct DataArgs {
    std::string panel = "panel.csv";
    std::string industry = "industry.csv";
    std::size_t fill_days = 0;  // 0 rejects gaps

    void attach(CLI::App& cmd) {
        cmd.add_option("--panel", panel, "Panel CSV (date,ticker,close,open,high,low,turnover,volume)")
            ->capture_default_str();
        cmd.add_option("--industry", industry, "Industry CSV (ticker,primary,secondary)")->capture_default_str();
        cmd.add_option("--fill-days", fill_days, "Forward-fill gaps up to this many days (0 rejects gaps)");
    }

    std::pair<StockPanel, IndustryMap> load(const TrainConfig& cfg) const {
        PanelConfig pc;
        pc.delta1 = cfg.delta1;
        pc.delta2 = cfg.delta2;
        if (fill_days > 0) {
            pc.missing = MissingPolicy::forward_fill;
            pc.max_fill_days = fill_days;
        }
        return load_panel_files(panel, industry, pc);
    }
};

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << std::setprecision(17);
    return f;
}

std::vector<std::size_t> pick_split(const Dataset& data, const std::string& name) {
    if (name == "train") return data.split.train;
    if (name == "valid") return data.split.valid;
    if (name == "test") return data.split.test;
    if (name == "all") {
        std::vector<std::size_t> all(data.days.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return all;
    }
    throw ConfigError("unknown split '" + name + "' (train|valid|test|all)");
}

std::size_t window_for_date(const Dataset& data, const std::string& date) {
    for (std::size_t w = 0; w < data.days.size(); ++w)
        if (data.panel.calendar[data.days[w].day] == date) return w;
    throw ConfigError("no scoreable window ends on " + date);
}

Checkpoint require_checkpoint(const std::string& path) {
    if (!fs::exists(path)) throw CheckpointError("checkpoint not found: " + path);
    return load_checkpoint_file(path);
}

void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides) {
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
}

// ---- gen --------------------------------------------------------------------

struct GenArgs {
    std::uint64_t seed = 7;
    std::size_t stocks = 20;
    std::size_t days = 120;
    std::string out = ".";
};

void cmd_gen(const GenArgs& a, std::ostream& log) {
    if (a.stocks < 2) throw ConfigError("--stocks must be at least 2");
    if (a.days < 30) throw ConfigError("--days must be at least 30");
    const auto [panel, industry] = gen_synthetic(a.seed, a.stocks, a.days);
    const fs::path dir(a.out);
    auto p = open_out(dir / "panel.csv");
    write_panel_csv(p, panel);
    auto i = open_out(dir / "industry.csv");
    write_industry_csv(i, panel, industry);
    log << "wrote " << (dir / "panel.csv").string() << " and " << (dir / "industry.csv").string() << '\n';
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
    DataArgs data;
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::string out = "run";
};

TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides,
                           std::optional<std::uint64_t> seed, std::optional<std::size_t> epochs) {
    TrainConfig cfg = path.empty() ? TrainConfig{} : load_config_file(path);
    apply_overrides(cfg, overrides);
    if (seed) cfg.seed = *seed;
    if (epochs) cfg.epochs = *epochs;
    cfg.validate();
    return cfg;
}

void cmd_train(const TrainArgs& a, std::ostream& log) {
    const TrainConfig cfg = resolve_config(a.config, a.overrides, a.seed, a.epochs);
    const auto [panel, industry] = a.data.load(cfg);
    const fs::path dir(a.out);
    auto echo = open_out(dir / "config_effective.txt");
    write_config(echo, cfg);
    echo.close();

    const TrainResult result = train(panel, industry, cfg);
    auto tl = open_out(dir / "training_log.csv");
    write_training_log(tl, result.log);
    save_checkpoint_file((dir / "checkpoint.txt").string(), result.params, cfg);

    const auto& last = result.log.epochs.back();
    log << "epochs " << result.log.epochs.size() << ", best epoch " << result.log.best_epoch << ", train loss "
        << last.train_loss << ", valid loss " << last.valid_loss << '\n';
}

// ---- backtest ---------------------------------------------------------------

struct BacktestArgs {
    DataArgs data;
    std::string checkpoint = "run/checkpoint.txt";
    std::string split = "test";
    std::optional<std::size_t> top_k;
    std::optional<std::string> execution;
    std::string out = "backtest";
    bool svg = true;
};

void cmd_backtest(const BacktestArgs& a, std::ostream& log) {
    Checkpoint ck = require_checkpoint(a.checkpoint);
    if (a.top_k) ck.config.top_k = *a.top_k;
    if (a.execution) ck.config.execution = *a.execution;
    ck.config.validate();
    const auto [panel, industry] = a.data.load(ck.config);
    const Dataset data = prepare_dataset(panel, industry, ck.config);
    const auto windows = pick_split(data, a.split);
    const SplitScores scored = score_split(ck.params, data, windows, ck.config.execution);
    const BacktestReport report = run_backtest(scored, data, ck.config.top_k);

    const fs::path dir(a.out);
    auto m = open_out(dir / "metrics.json");
    write_metrics_json(m, report.metrics);
    auto e = open_out(dir / "equity.csv");
    write_equity_csv(e, report, scored.dates);
    auto h = open_out(dir / "holdings.csv");
    write_holdings_csv(h, report, scored.dates);
    if (a.svg) {
        std::vector<double> bench(report.benchmark_returns.size());
        double level = 1.0;
        for (std::size_t t = 0; t < bench.size(); ++t) bench[t] = level *= 1.0 + report.benchmark_returns[t];
        auto s = open_out(dir / "equity.svg");
        write_line_svg(s, "equity (" + a.split + ")", {{"portfolio", report.equity}, {"benchmark", bench}});
    }
    for (const auto& w : report.warnings) log << "warning: " << w << '\n';
    log << "days " << report.equity.size() << ", ARR " << report.metrics.arr << ", MDD " << report.metrics.mdd << '\n';
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
    DataArgs data;
    std::string checkpoint = "run/checkpoint.txt";
    std::string split = "test";
    std::string out;
    std::string date_a, date_b;
    std::size_t window = 20;
    std::vector<std::string> tickers;
    bool svg = false;
};

void report_kappa(const ReportArgs& a, std::ostream& log) {
    const Checkpoint ck = require_checkpoint(a.checkpoint);
    const auto [panel, industry] = a.data.load(ck.config);
    const Dataset data = prepare_dataset(panel, industry, ck.config);
    const SplitScores scored = score_split(ck.params, data, pick_split(data, a.split));
    const std::vector<double> level = index_level(data.panel);

    const fs::path path(a.out.empty() ? "kappa.csv" : a.out);
    auto f = open_out(path);
    f << "date,index_level,kappa,retained_edges\n";
    std::vector<double> lv, kp;
    for (std::size_t t = 0; t < scored.windows.size(); ++t) {
        const std::size_t day = data.days[scored.windows[t]].day;
        f << scored.dates[t] << ',' << level[day] << ',' << scored.kappas[t] << ',' << scored.retained_edges[t] << '\n';
        lv.push_back(level[day]);
        kp.push_back(scored.kappas[t]);
    }
    if (a.svg) {
        fs::path svg = path;
        auto s = open_out(svg.replace_extension(".svg"));
        write_line_svg(s, "sparsity vs index", {{"index level", lv}, {"kappa", kp}});
    }
    log << "wrote " << scored.windows.size() << " rows to " << path.string() << '\n';
}

void report_embed_sim(const ReportArgs& a, std::ostream& log) {
    const Checkpoint ck = require_checkpoint(a.checkpoint);
    const auto [panel, industry] = a.data.load(ck.config);
    const Dataset data = prepare_dataset(panel, industry, ck.config);
    const std::size_t wa = a.date_a.empty() ? data.split.test.front() : window_for_date(data, a.date_a);
    const std::size_t wb = a.date_b.empty() ? wa : window_for_date(data, a.date_b);
    const StockEmbedding ea = embed(ck.params, data.days[wa]);
    const StockEmbedding eb = wb == wa ? ea : embed(ck.params, data.days[wb]);
    const Tensor sim = cosine_similarity(ea.p, eb.p);

    const fs::path path(a.out.empty() ? "embed_sim.csv" : a.out);
    auto f = open_out(path);
    f << "ticker";
    for (const auto& t : data.panel.tickers) f << ',' << t;
    f << '\n';
    for (std::size_t i = 0; i < data.panel.stocks(); ++i) {
        f << data.panel.tickers[i];
        for (std::size_t j = 0; j < data.panel.stocks(); ++j) f << ',' << sim(i, j);
        f << '\n';
    }
    log << "embedding similarity " << data.panel.calendar[data.days[wa].day] << " vs "
        << data.panel.calendar[data.days[wb].day] << " -> " << path.string() << '\n';
}

void report_corr(const ReportArgs& a, std::ostream& log) {
    if (a.window < 3) throw ConfigError("--window must be at least 3");
    const auto [panel, industry] = a.data.load(TrainConfig{});
    std::vector<std::size_t> idx;
    if (a.tickers.empty()) {
        for (std::size_t i = 0; i < panel.stocks(); ++i) idx.push_back(i);
    } else {
        for (const auto& t : a.tickers) {
            const auto it = std::find(panel.tickers.begin(), panel.tickers.end(), t);
            if (it == panel.tickers.end()) throw ConfigError("unknown ticker " + t);
            idx.push_back(static_cast<std::size_t>(it - panel.tickers.begin()));
        }
    }
    if (idx.size() < 2) throw ConfigError("corr needs at least two tickers");
    if (panel.days() < a.window) throw InsufficientHistoryError("panel shorter than --window");

    const fs::path path(a.out.empty() ? "corr.csv" : a.out);
    auto f = open_out(path);
    f << "date,ticker_a,ticker_b,spearman\n";
    std::size_t rows = 0;
    for (std::size_t end = a.window - 1; end < panel.days(); ++end) {
        Tensor series({idx.size(), a.window});
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t l = 0; l < a.window; ++l) series(r, l) = panel.at(idx[r], end + 1 - a.window + l, kClose);
        const SimilarityMatrix q = spearman_matrix(series, end);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = i + 1; j < idx.size(); ++j, ++rows)
                f << panel.calendar[end] << ',' << panel.tickers[idx[i]] << ',' << panel.tickers[idx[j]] << ','
                  << q.q(i, j) << '\n';
    }
    log << "wrote " << rows << " rows to " << path.string() << '\n';
}

void report_graph(const ReportArgs& a, std::ostream& log) {
    const Checkpoint ck = require_checkpoint(a.checkpoint);
    const auto [panel, industry] = a.data.load(ck.config);
    const Dataset data = prepare_dataset(panel, industry, ck.config);
    const std::size_t w = a.date_a.empty() ? data.split.test.front() : window_for_date(data, a.date_a);
    const Prediction p = predict(data.days[w], ck.params);
    const fs::path path(a.out.empty() ? "graph.csv" : a.out);
    auto f = open_out(path);
    write_graph_csv(f, p.graph);
    log << "kappa " << p.kappa << ", retained " << p.graph.retained_off_diagonal() << " edges -> " << path.string()
        << '\n';
}

// ---- sweep ------------------------------------------------------------------

struct SweepArgs {
    DataArgs data;
    std::string config;
    std::vector<std::string> overrides;
    std::string param = "lookback";
    std::vector<std::string> values;
    std::string out = "sweep.csv";
};

void cmd_sweep(const SweepArgs& a, std::ostream& log) {
    static const std::vector<std::string> allowed{"lookback", "gnn_layers", "eta", "levels"};
    if (std::find(allowed.begin(), allowed.end(), a.param) == allowed.end())
        throw ConfigError("sweep parameter must be one of lookback, gnn_layers, eta, levels");
    if (a.values.empty()) throw ConfigError("sweep needs at least one --values entry");
    const TrainConfig base = resolve_config(a.config, a.overrides, std::nullopt, std::nullopt);
    const auto [panel, industry] = a.data.load(base);

    auto f = open_out(a.out);
    f << "param,value,final_valid_loss,best_valid_loss,epochs\n";
    for (const auto& v : a.values) {
        TrainConfig cfg = base;
        set_config_value(cfg, a.param, v);
        cfg.validate();
        const TrainResult r = train(panel, industry, cfg);
        double best = r.log.epochs.front().valid_loss;
        for (const auto& e : r.log.epochs) best = std::min(best, e.valid_loss);
        f << a.param << ',' << v << ',' << r.log.epochs.back().valid_loss << ',' << best << ','
          << r.log.epochs.size() << '\n';
        log << a.param << '=' << v << " valid loss " << r.log.epochs.back().valid_loss << '\n';
    }
}

std::vector<std::size_t> parse_grid(const std::string& text) {
    std::vector<std::size_t> grid;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            grid.push_back(std::stoul(item));
        } catch (const std::exception&) {
            throw ConfigError("bad grid entry '" + item + "'");
        }
    }
    return grid;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dynamic-graph multi-level state-space stock ranking"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "finmamba 1.0");

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Write a deterministic synthetic panel and industry map");
    g->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
    g->add_option("--stocks", gen.stocks, "Number of stocks (>= 2)")->capture_default_str();
    g->add_option("--days", gen.days, "Number of trading days (>= 30)")->capture_default_str();
    g->add_option("--out", gen.out, "Output directory")->capture_default_str();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model and write checkpoint, log and effective config");
    tr.data.attach(*t);
    t->add_option("--config", tr.config, "Config file of key = value lines");
    t->add_option("--set", tr.overrides, "Config override key=value (repeatable)");
    t->add_option("--seed", tr.seed, "Override the config seed");
    t->add_option("--epochs", tr.epochs, "Override the epoch count");
    t->add_option("--out", tr.out, "Output directory")->capture_default_str();

    BacktestArgs bt;
    auto* b = app.add_subcommand("backtest", "Score a split with a checkpoint and simulate the top-k portfolio");
    bt.data.attach(*b);
    b->add_option("--checkpoint", bt.checkpoint, "Checkpoint written by train")->capture_default_str();
    b->add_option("--split", bt.split, "train | valid | test | all")->capture_default_str();
    b->add_option("--top-k", bt.top_k, "Portfolio size (defaults to the checkpoint config)");
    b->add_option("--execution", bt.execution, "close | open");
    b->add_option("--out", bt.out, "Output directory")->capture_default_str();
    b->add_flag("--svg,!--no-svg", bt.svg, "Also write equity.svg");

    ReportArgs rp;
    auto* r = app.add_subcommand("report", "Analysis reports");
    r->require_subcommand(1);
    auto* rk = r->add_subcommand("kappa", "Per-day sparsity level against the equal-weight index");
    auto* re = r->add_subcommand("embed-sim", "Cosine similarity of stock embeddings between two windows");
    auto* rc = r->add_subcommand("corr", "Rolling pairwise rank correlation of close prices");
    auto* rg = r->add_subcommand("graph", "Sparsified daily graph of one window");
    for (auto* sub : {rk, re, rc, rg}) {
        rp.data.attach(*sub);
        sub->add_option("--out", rp.out, "Output CSV");
    }
    for (auto* sub : {rk, re, rg})
        sub->add_option("--checkpoint", rp.checkpoint, "Checkpoint written by train")->capture_default_str();
    rk->add_option("--split", rp.split, "train | valid | test | all")->capture_default_str();
    rk->add_flag("--svg", rp.svg, "Also write an SVG next to the CSV");
    re->add_option("--date-a", rp.date_a, "Window end date (default: first test day)");
    re->add_option("--date-b", rp.date_b, "Second window end date (default: same as --date-a)");
    rg->add_option("--date", rp.date_a, "Window end date (default: first test day)");
    rc->add_option("--window", rp.window, "Rolling window length")->capture_default_str();
    rc->add_option("--tickers", rp.tickers, "Restrict to these tickers");

    std::string grid_text = "20,40,80,160";
    std::string bench_out;
    BenchSettings bs;
    auto* be = app.add_subcommand("bench", "Scan vs dense attention timing and memory over a lookback grid");
    be->add_option("--grid", grid_text, "Comma-separated lookback values")->capture_default_str();
    be->add_option("--reps", bs.repetitions, "Repetitions per point (median reported)")->capture_default_str();
    be->add_option("--stocks", bs.stocks, "Sequences per call")->capture_default_str();
    be->add_option("--d-model", bs.d_model, "Channel width")->capture_default_str();
    be->add_option("--d-state", bs.d_state, "State size")->capture_default_str();
    be->add_option("--seed", bs.seed, "Input seed")->capture_default_str();
    be->add_option("--out", bench_out, "Output CSV (default: stdout)");

    SweepArgs sw;
    auto* s = app.add_subcommand("sweep", "Final validation loss over a grid of one hyperparameter");
    sw.data.attach(*s);
    s->add_option("--config", sw.config, "Base config file");
    s->add_option("--set", sw.overrides, "Config override key=value (repeatable)");
    s->add_option("--param", sw.param, "lookback | gnn_layers | eta | levels")->capture_default_str();
    s->add_option("--values", sw.values, "Values to try")->required();
    s->add_option("--out", sw.out, "Output CSV")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*g) cmd_gen(gen, out);
        else if (*t) cmd_train(tr, out);
        else if (*b) cmd_backtest(bt, out);
        else if (*rk) report_kappa(rp, out);
        else if (*re) report_embed_sim(rp, out);
        else if (*rc) report_corr(rp, out);
        else if (*rg) report_graph(rp, out);
        else if (*s) cmd_sweep(sw, out);
        else if (*be) {
            bs.grid = parse_grid(grid_text);
            const auto rows = run_bench(bs);
            if (bench_out.empty()) {
                write_bench_csv(out, rows);
            } else {
                auto f = open_out(bench_out);
                write_bench_csv(f, rows);
            }
        }
    } catch (const TrainingDivergence& e) {
        err << "error: " << e.what() << " (day " << e.day_index << ")\n";
        return 3;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace finmamba::cli
