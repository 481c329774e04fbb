#include "finmamba/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

#include "finmamba/errors.hpp"

namespace finmamba {

DataSplit split_windows(const std::vector<Window>& windows, const StockPanel& panel, const TrainConfig& config) {
    DataSplit s;
    const std::size_t n = windows.size();
    if (!config.train_end.empty() || !config.valid_end.empty()) {
        if (config.train_end.empty() || config.valid_end.empty() || !(config.train_end < config.valid_end))
            throw ConfigError("train_end and valid_end must both be set with train_end < valid_end");
        for (std::size_t k = 0; k < n; ++k) {
            const std::string& date = panel.calendar[windows[k].day];
            if (date <= config.train_end)
                s.train.push_back(k);
            else if (date <= config.valid_end)
                s.valid.push_back(k);
            else
                s.test.push_back(k);
        }
    } else {
        const std::size_t n_train = n * 4 / 6, n_valid = n / 6;
        for (std::size_t k = 0; k < n; ++k) {
            if (k < n_train)
                s.train.push_back(k);
            else if (k < n_train + n_valid)
                s.valid.push_back(k);
            else
                s.test.push_back(k);
        }
    }
    if (s.train.empty() || s.valid.empty() || s.test.empty())
        throw ConfigError("chronological split left an empty train/validation/test range (" +
                          std::to_string(s.train.size()) + "/" + std::to_string(s.valid.size()) + "/" +
                          std::to_string(s.test.size()) + " windows)");
    return s;
}

Dataset prepare_dataset(const StockPanel& panel, const IndustryMap& industry, const TrainConfig& config) {
    config.validate();
    Dataset data;
    data.panel = panel;
    data.industry = industry;
    data.industry.delta1 = config.delta1;
    data.industry.delta2 = config.delta2;
    const auto windows = make_windows(panel, config.lookback);
    data.split = split_windows(windows, panel, config);
    // Scaler statistics come from days the training windows can see.
    data.scaler = FeatureScaler::fit(panel, 0, windows[data.split.train.back()].day + 1);
    const DecayMatrix decay = decay_matrix(data.industry, panel.tickers);
    data.days.resize(windows.size());
    const auto count = static_cast<std::ptrdiff_t>(windows.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < count; ++k)
        data.days[k] = make_day_input(data.scaler.apply(windows[k]), windows[k], decay);
    return data;
}

Adam::Adam(const ModelParams& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const Tensor* t : params.tensors()) {
        m_.push_back(Tensor::like(*t));
        v_.push_back(Tensor::like(*t));
    }
}

void Adam::step(ModelParams& params) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto tensors = params.tensors();
    const auto& grads = params.grads();
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        Tensor& p = *tensors[k];
        for (std::size_t e = 0; e < p.size(); ++e) {
            const double g = grads[k][e];
            m_[k][e] = beta1_ * m_[k][e] + (1.0 - beta1_) * g;
            v_[k][e] = beta2_ * v_[k][e] + (1.0 - beta2_) * g * g;
            const double mhat = m_[k][e] / c1, vhat = v_[k][e] / c2;
            p[e] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void write_training_log(std::ostream& out, const TrainingLog& log) {
    out << "epoch,train_loss,valid_loss,train_ic,valid_ic,train_rp,train_gib\n" << std::setprecision(17);
    for (const auto& e : log.epochs)
        out << e.epoch << ',' << e.train_loss << ',' << e.valid_loss << ',' << e.train_ic << ',' << e.valid_ic << ','
            << e.train_rp << ',' << e.train_gib << '\n';
}

Evaluation evaluate(const ModelParams& params, const Dataset& data, std::span<const std::size_t> days,
                    const LossSettings& settings) {
    Evaluation ev;
    ev.scores.resize(days.size());
    std::vector<double> losses(days.size()), ics(days.size()), rps(days.size()), gibs(days.size());
    std::vector<std::exception_ptr> errors(days.size());
    const auto count = static_cast<std::ptrdiff_t>(days.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < count; ++k) {
        try {
            const DayInput& in = data.days.at(days[k]);
            const Prediction p = predict(in, params);
            const double rp = loss_rp(p.scores, in.returns, settings.weights.eta);
            const double gib = loss_gib(p.z, in.features);
            losses[k] = loss_total(rp, gib, settings.weights, in.day) + settings.lambda_kappa * p.kappa;
            ics[k] = rank_ic(p.scores, in.returns);
            rps[k] = rp;
            gibs[k] = gib;
            ev.scores[k] = p.scores;
        } catch (...) {
            errors[k] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    for (std::size_t k = 0; k < days.size(); ++k) {
        ev.loss += losses[k];
        ev.rank_ic += ics[k];
        ev.rp += rps[k];
        ev.gib += gibs[k];
    }
    if (!days.empty()) {
        const double n = static_cast<double>(days.size());
        ev.loss /= n;
        ev.rank_ic /= n;
        ev.rp /= n;
        ev.gib /= n;
    }
    return ev;
}

Evaluation accumulate_gradients(ModelParams& params, const Dataset& data, std::span<const std::size_t> days,
                                const LossSettings& settings) {
    Evaluation ev;
    const std::size_t count = days.size();
    ev.scores.resize(count);
    std::vector<std::vector<Tensor>> day_grads(count);
    std::vector<double> losses(count), ics(count), rps(count), gibs(count);
    std::vector<std::exception_ptr> errors(count);
    const ModelParams& frozen = params;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t kk = 0; kk < static_cast<std::ptrdiff_t>(count); ++kk) {
        const auto k = static_cast<std::size_t>(kk);
        try {
            const DayInput& in = data.days.at(days[k]);
            ad::Tape tape;
            const auto bound = bind(tape, frozen, true);
            const ForwardOutput out = forward(tape, in, bound, frozen);
            const DayLoss loss = day_loss(tape, out, in, settings);
            if (!std::isfinite(loss.total.item()))
                throw TrainingDivergence("non-finite loss on day " + std::to_string(in.day), in.day);
            tape.backward(loss.total);
            day_grads[k] = collect_grads(bound);
            losses[k] = loss.total.item();
            rps[k] = loss.rp;
            gibs[k] = loss.gib;
            ev.scores[k].assign(out.scores.value().storage().begin(), out.scores.value().storage().end());
            ics[k] = rank_ic(ev.scores[k], in.returns);
        } catch (...) {
            errors[k] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    // Ordered reduction keeps the sum independent of thread scheduling.
    auto& grads = params.grads();
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t k = 0; k < count; ++k) {
        for (std::size_t t = 0; t < grads.size(); ++t)
            for (std::size_t e = 0; e < grads[t].size(); ++e) grads[t][e] += day_grads[k][t][e] * inv;
        ev.loss += losses[k] * inv;
        ev.rank_ic += ics[k] * inv;
        ev.rp += rps[k] * inv;
        ev.gib += gibs[k] * inv;
    }
    return ev;
}

double clip_gradients(ModelParams& params, double max_norm) {
    double ss = 0.0;
    for (const Tensor& g : params.grads())
        for (double v : g.storage()) ss += v * v;
    const double norm = std::sqrt(ss);
    if (norm > max_norm) {
        const double f = max_norm / norm;
        for (Tensor& g : params.grads())
            for (double& v : g.storage()) v *= f;
    }
    return norm;
}

TrainResult train(const Dataset& data, const TrainConfig& config) {
    config.validate();
    const LossSettings settings = config.loss();
    ModelParams params = ModelParams::init(config.model(), config.seed);
    ModelParams best = params;
    Adam adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps);
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

    TrainingLog log;
    double best_valid = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    std::vector<std::size_t> order = data.split.train;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0, ic_sum = 0.0, rp_sum = 0.0, gib_sum = 0.0;
        for (std::size_t b = 0; b < order.size(); b += config.batch_days) {
            const std::size_t e = std::min(order.size(), b + config.batch_days);
            const std::span<const std::size_t> batch(order.data() + b, e - b);
            params.zero_grad();
            const Evaluation ev = accumulate_gradients(params, data, batch, settings);
            if (config.grad_clip > 0.0) clip_gradients(params, config.grad_clip);
            adam.step(params);
            loss_sum += ev.loss * static_cast<double>(batch.size());
            ic_sum += ev.rank_ic * static_cast<double>(batch.size());
            rp_sum += ev.rp * static_cast<double>(batch.size());
            gib_sum += ev.gib * static_cast<double>(batch.size());
        }
        const Evaluation valid = evaluate(params, data, data.split.valid, settings);
        const double n = static_cast<double>(order.size());
        log.epochs.push_back(EpochLog{epoch, loss_sum / n, valid.loss, ic_sum / n, valid.rank_ic, rp_sum / n, gib_sum / n});

        if (valid.loss < best_valid) {
            best_valid = valid.loss;
            best = params;
            log.best_epoch = epoch;
            since_best = 0;
        } else if (config.patience > 0 && ++since_best >= config.patience) {
            log.early_stopped = true;
            break;
        }
    }
    if (config.patience > 0) params = std::move(best);
    return TrainResult{std::move(params), std::move(log)};
}

TrainResult train(const StockPanel& panel, const IndustryMap& industry, const TrainConfig& config) {
    return train(prepare_dataset(panel, industry, config), config);
}

}  // namespace finmamba
