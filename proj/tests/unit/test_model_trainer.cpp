#include <catch_amalgamated.hpp>

#include <set>
#include <sstream>

#include "finmamba/checkpoint.hpp"
#include "finmamba/config.hpp"
#include "finmamba/errors.hpp"
#include "finmamba/gradcheck.hpp"
#include "finmamba/trainer.hpp"
#include "oracles.hpp"

using namespace finmamba;
using Catch::Approx;

namespace {

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.lookback = 10;
    cfg.d_model = 8;
    cfg.d_out = 4;
    cfg.d_state = 4;
    cfg.heads = 2;
    cfg.epochs = 3;
    cfg.patience = 0;
    return cfg;
}

}  // namespace

TEST_CASE("forward produces one finite score per stock", "[model]") {
    const auto [panel, industry] = gen_synthetic(1, 3, 40);
    TrainConfig cfg = small_config();
    cfg.lookback = 20;
    const Dataset data = prepare_dataset(panel, industry, cfg);
    const ModelParams params = ModelParams::init(cfg.model(), 5);
    const Prediction p = predict(data.days.front(), params);
    REQUIRE(p.scores.size() == 3);
    for (double s : p.scores) CHECK(std::isfinite(s));
    CHECK(p.kappa > 0.0);
    CHECK(p.kappa < cfg.tau);
    const Prediction again = predict(data.days.front(), params);
    CHECK(again.scores == p.scores);
    CHECK(p.z.shape() == data.days.front().features.shape());
}

TEST_CASE("registry names are unique and cover every tensor", "[model]") {
    const ModelParams params = ModelParams::init(small_config().model(), 1);
    const auto names = params.names();
    CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
    CHECK(names.size() == params.tensors().size());
    CHECK(params.grads().size() == names.size());
    std::size_t count = 0;
    for (const Tensor* t : params.tensors()) count += t->size();
    CHECK(count == params.parameter_count());
    CHECK(names.front() == "sparsifier.branch1x1.kernel");
    CHECK(names.back() == "head.bias");
}

TEST_CASE("duplicated stock with duplicated graph entries gets the same score", "[model]") {
    const auto [panel, industry] = gen_synthetic(2, 4, 40);
    const TrainConfig cfg = small_config();
    const Dataset data = prepare_dataset(panel, industry, cfg);
    const DayInput& base = data.days[3];
    const std::size_t n = 4, len = base.features.dim(1), f = base.features.dim(2);
    DayInput dup;
    dup.day = base.day;
    dup.features = Tensor({n + 1, len, f});
    dup.returns = base.returns;
    dup.returns.push_back(base.returns[1]);
    dup.adjacency = Tensor({n + 1, n + 1});
    auto src = [](std::size_t i) { return i == 4 ? std::size_t{1} : i; };
    for (std::size_t i = 0; i <= n; ++i) {
        for (std::size_t e = 0; e < len * f; ++e) dup.features[i * len * f + e] = base.features[src(i) * len * f + e];
        for (std::size_t j = 0; j <= n; ++j) dup.adjacency(i, j) = base.adjacency(src(i), src(j));
    }
    const std::vector<unsigned char> all((n + 1) * (n + 1), 1);
    const ModelParams params = ModelParams::init(cfg.model(), 3);
    ad::Tape tape;
    const auto w = bind(tape, params, false);
    const ForwardOutput out = forward(tape, dup, w, params, ForwardOptions{&all});
    CHECK(out.scores.value()[4] == out.scores.value()[1]);
}

TEST_CASE("scores do not look ahead", "[model]") {
    auto [panel, industry] = gen_synthetic(3, 5, 60);
    const TrainConfig cfg = small_config();
    const Dataset data = prepare_dataset(panel, industry, cfg);
    const std::size_t w = data.split.test.front();
    const std::size_t t = data.days[w].day;
    const ModelParams params = ModelParams::init(cfg.model(), 4);
    const Prediction before = predict(data.days[w], params);

    for (std::size_t i = 0; i < panel.stocks(); ++i)
        for (std::size_t f = 0; f < kFeatureCount; ++f) panel.values(i, t + 1, f) *= 1.37;
    const Dataset moved = prepare_dataset(panel, industry, cfg);
    const Prediction after = predict(moved.days[w], params);
    CHECK(after.scores == before.scores);
    CHECK(moved.days[w].returns != data.days[w].returns);
}

TEST_CASE("chronological splits", "[trainer]") {
    const auto [panel, industry] = gen_synthetic(4, 4, 70);
    TrainConfig cfg = small_config();
    const auto windows = make_windows(panel, cfg.lookback);
    SECTION("default 4:1:1") {
        const DataSplit s = split_windows(windows, panel, cfg);
        CHECK(s.train.size() == 40);
        CHECK(s.valid.size() == 10);
        CHECK(s.test.size() == 10);
        CHECK(s.train.back() + 1 == s.valid.front());
        CHECK(s.valid.back() + 1 == s.test.front());
    }
    SECTION("by date") {
        cfg.train_end = panel.calendar[40];
        cfg.valid_end = panel.calendar[50];
        const DataSplit s = split_windows(windows, panel, cfg);
        CHECK(windows[s.train.back()].day == 40);
        CHECK(windows[s.valid.back()].day == 50);
        CHECK(s.train.size() + s.valid.size() + s.test.size() == windows.size());
    }
    SECTION("empty range") {
        cfg.train_end = "1999-01-01";
        cfg.valid_end = "1999-06-01";
        CHECK_THROWS_AS(split_windows(windows, panel, cfg), ConfigError);
    }
}

TEST_CASE("zero learning rate leaves parameters untouched", "[trainer]") {
    const auto [panel, industry] = gen_synthetic(5, 4, 50);
    TrainConfig cfg = small_config();
    cfg.learning_rate = 0.0;
    const TrainResult r = train(panel, industry, cfg);
    const ModelParams init = ModelParams::init(cfg.model(), cfg.seed);
    const auto a = r.params.tensors();
    const auto b = init.tensors();
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(max_abs_diff(*a[k], *b[k]) == 0.0);
}

TEST_CASE("training is reproducible and logs every epoch", "[trainer]") {
    const auto [panel, industry] = gen_synthetic(6, 5, 50);
    const TrainConfig cfg = small_config();
    const TrainResult a = train(panel, industry, cfg);
    const TrainResult b = train(panel, industry, cfg);
    REQUIRE(a.log.epochs.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(a.log.epochs[e].train_loss == b.log.epochs[e].train_loss);
        CHECK(a.log.epochs[e].valid_loss == b.log.epochs[e].valid_loss);
        CHECK(a.log.epochs[e].train_ic == b.log.epochs[e].train_ic);
    }
    std::ostringstream out;
    write_training_log(out, a.log);
    CHECK(out.str().rfind("epoch,train_loss,valid_loss,train_ic,valid_ic,train_rp,train_gib\n1,", 0) == 0);
}

TEST_CASE("early stopping on a flat validation loss", "[trainer]") {
    const auto [panel, industry] = gen_synthetic(7, 4, 50);
    TrainConfig cfg = small_config();
    cfg.learning_rate = 0.0;
    cfg.epochs = 20;
    cfg.patience = 2;
    const TrainResult r = train(panel, industry, cfg);
    CHECK(r.log.early_stopped);
    CHECK(r.log.epochs.size() == 3);
    CHECK(r.log.best_epoch == 1);
}

TEST_CASE("divergence aborts with the offending day", "[trainer]") {
    const auto [panel, industry] = gen_synthetic(8, 4, 50);
    TrainConfig cfg = small_config();
    cfg.learning_rate = 1e200;
    cfg.epochs = 5;
    try {
        train(panel, industry, cfg);
        FAIL("expected divergence");
    } catch (const TrainingDivergence& e) {
        CHECK(e.day_index < panel.days());
    }
}

TEST_CASE("gradient clipping caps the global norm", "[trainer]") {
    ModelParams params = ModelParams::init(small_config().model(), 2);
    std::mt19937_64 rng(3);
    for (auto& g : params.grads())
        for (double& v : g.storage()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    const std::vector<Tensor> raw = params.grads();
    double ss = 0;
    for (const auto& g : raw)
        for (double v : g.storage()) ss += v * v;
    CHECK(clip_gradients(params, 1e9) == Approx(std::sqrt(ss)).epsilon(1e-14));
    CHECK(params.grads()[0].storage() == raw[0].storage());
    clip_gradients(params, 0.5);
    double after = 0;
    for (std::size_t k = 0; k < raw.size(); ++k)
        for (std::size_t e = 0; e < raw[k].size(); ++e) {
            after += params.grads()[k][e] * params.grads()[k][e];
            CHECK(params.grads()[k][e] == Approx(raw[k][e] * 0.5 / std::sqrt(ss)).epsilon(1e-12));
        }
    CHECK(std::sqrt(after) == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("first Adam step moves each weight by the learning rate", "[trainer]") {
    ModelParams params = ModelParams::init(small_config().model(), 2);
    const ModelParams before = params;
    std::mt19937_64 rng(1);
    for (auto& g : params.grads())
        for (double& v : g.storage()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    Adam adam(params, 0.01, 0.9, 0.999, 1e-8);
    adam.step(params);
    const auto a = params.tensors();
    const auto b = before.tensors();
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t e = 0; e < a[k]->size(); ++e) {
            const double g = params.grads()[k][e];
            CHECK((*a[k])[e] - (*b[k])[e] == Approx(-0.01 * g / (std::abs(g) + 1e-8)).margin(1e-12));
        }
}

TEST_CASE("gradient check on a small probe", "[gradcheck]") {
    const auto [panel, industry] = gen_synthetic(9, 4, 40);
    TrainConfig cfg = small_config();
    cfg.lookback = 8;
    cfg.lambda_kappa = 0.3;
    const Dataset data = prepare_dataset(panel, industry, cfg);
    const ModelParams params = ModelParams::init(cfg.model(), 6);
    const std::vector<DayInput> probe(data.days.begin(), data.days.begin() + 2);
    const GradCheckReport ok = grad_check(params, probe, cfg.loss(), 1e-4);
    CHECK(ok.passed);
    CHECK(ok.entries.size() == params.names().size());
    for (const auto& e : ok.entries) CHECK(e.max_rel_error < 1e-4);

    const GradCheckReport strict = grad_check(params, probe, cfg.loss(), 0.0);
    CHECK_FALSE(strict.passed);
    CHECK_FALSE(strict.failures.empty());
}

TEST_CASE("linear head on squared error agrees with finite differences", "[gradcheck]") {
    std::mt19937_64 rng(3);
    Tensor x = oracle::random_tensor(rng, {5, 7});
    Tensor w = oracle::random_tensor(rng, {1, 7});
    Tensor b = oracle::random_tensor(rng, {1});
    const std::vector<double> r{0.1, -0.2, 0.05, 0.3, 0.0};
    auto loss = [&] {
        ad::Tape tape;
        return loss_rp(tape, ad::add_bias(tape, ad::linear(tape, tape.constant(x), tape.constant(w)), tape.constant(b)),
                       r, 0.0)
            .item();
    };
    ad::Tape tape;
    ad::Var wv = tape.parameter(w), bv = tape.parameter(b);
    ad::Var l = loss_rp(tape, ad::add_bias(tape, ad::linear(tape, tape.constant(x), wv), bv), r, 0.0);
    tape.backward(l);
    for (std::size_t e = 0; e < 7; ++e)
        CHECK(wv.grad()[e] == Approx(oracle::central_difference(loss, w[e], 1e-5)).epsilon(1e-9));
    CHECK(bv.grad()[0] == Approx(oracle::central_difference(loss, b[0], 1e-5)).epsilon(1e-9));
}

TEST_CASE("checkpoints round-trip bitwise", "[checkpoint]") {
    TrainConfig cfg = small_config();
    cfg.eta = 2.5;
    cfg.execution = "open";
    const ModelParams params = ModelParams::init(cfg.model(), 77);
    std::stringstream buf;
    save_checkpoint(buf, params, cfg);
    const Checkpoint back = load_checkpoint(buf);
    CHECK(back.config.eta == 2.5);
    CHECK(back.config.execution == "open");
    CHECK(back.config.d_model == cfg.d_model);
    const auto a = params.tensors();
    const auto b = back.params.tensors();
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k]->storage() == b[k]->storage());

    std::string text = buf.str();
    std::istringstream truncated(text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(truncated), CheckpointError);
    std::istringstream garbage("hello world");
    CHECK_THROWS_AS(load_checkpoint(garbage), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint_file("/nonexistent/checkpoint.txt"), CheckpointError);
}

TEST_CASE("config parsing, overrides and validation", "[config]") {
    std::istringstream in("# comment\nlookback = 30\n\neta=2   # trailing\nexecution = open\ntrain_end = 2020-03-01\n");
    const TrainConfig cfg = parse_config(in);
    CHECK(cfg.lookback == 30);
    CHECK(cfg.eta == 2.0);
    CHECK(cfg.execution == "open");
    CHECK(cfg.train_end == "2020-03-01");
    CHECK(cfg.learning_rate == 0.01);

    std::ostringstream out;
    write_config(out, cfg);
    std::istringstream again(out.str());
    const TrainConfig round = parse_config(again);
    CHECK(round.lookback == 30);
    CHECK(round.train_end == "2020-03-01");

    TrainConfig c;
    CHECK_THROWS_AS(set_config_value(c, "no_such_key", "1"), ConfigError);
    CHECK_THROWS_AS(set_config_value(c, "lookback", "abc"), ConfigError);
    std::istringstream bad("lookback 20\n");
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    c.lookback = 2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.learning_rate = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.execution = "midday";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.delta2 = 0.9;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(config_keys().size() == 27);
}
