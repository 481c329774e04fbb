#include "finmamba/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "finmamba/errors.hpp"

namespace finmamba {

ProbeObjective::ProbeObjective(const ModelParams& p, std::span<const DayInput> days, const LossSettings& s)
    : params(p), probe(days), settings(s) {
    if (probe.empty()) throw ContractError("gradient check needs at least one probe day");
    for (const DayInput& in : probe) masks.push_back(predict(in, params).graph.mask);
}

double ProbeObjective::value(const ModelParams& at) const {
    double total = 0.0;
    for (std::size_t k = 0; k < probe.size(); ++k) {
        ad::Tape tape;
        const auto w = bind(tape, at, false);
        ForwardOptions opts;
        opts.mask_override = &masks[k];
        const ForwardOutput out = forward(tape, probe[k], w, at, opts);
        total += day_loss(tape, out, probe[k], settings).total.item();
    }
    return total / static_cast<double>(probe.size());
}

std::vector<Tensor> ProbeObjective::gradient() const {
    std::vector<Tensor> grads;
    for (const Tensor* t : params.tensors()) grads.push_back(Tensor::like(*t));
    for (std::size_t k = 0; k < probe.size(); ++k) {
        ad::Tape tape;
        const auto w = bind(tape, params, true);
        ForwardOptions opts;
        opts.mask_override = &masks[k];
        const ForwardOutput out = forward(tape, probe[k], w, params, opts);
        const DayLoss loss = day_loss(tape, out, probe[k], settings);
        tape.backward(loss.total);
        const auto day = collect_grads(w);
        for (std::size_t t = 0; t < grads.size(); ++t)
            for (std::size_t e = 0; e < grads[t].size(); ++e)
                grads[t][e] += day[t][e] / static_cast<double>(probe.size());
    }
    return grads;
}

GradCheckReport grad_check(const ModelParams& params, std::span<const DayInput> probe, const LossSettings& settings,
                           double tolerance, double step) {
    const ProbeObjective objective(params, probe, settings);
    const std::vector<Tensor> analytic = objective.gradient();
    const std::vector<std::string> names = params.names();

    GradCheckReport report;
    report.tolerance = tolerance;
    ModelParams work = params;
    auto tensors = work.tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        Tensor& p = *tensors[t];
        Tensor numeric = Tensor::like(p);
        for (std::size_t e = 0; e < p.size(); ++e) {
            const double orig = p[e];
            p[e] = orig + step;
            const double up = objective.value(work);
            p[e] = orig - step;
            const double down = objective.value(work);
            p[e] = orig;
            numeric[e] = (up - down) / (2.0 * step);
        }
        GradCheckEntry entry;
        entry.name = names[t];
        double scale = 0.0;
        for (std::size_t e = 0; e < p.size(); ++e) {
            entry.max_abs_error = std::max(entry.max_abs_error, std::abs(analytic[t][e] - numeric[e]));
            scale = std::max({scale, std::abs(analytic[t][e]), std::abs(numeric[e])});
        }
        entry.max_rel_error = entry.max_abs_error / std::max(scale, 1e-12);
        entry.passed = entry.max_rel_error < tolerance;
        if (!entry.passed) report.failures.push_back(entry.name);
        report.entries.push_back(std::move(entry));
    }
    report.passed = report.failures.empty();
    return report;
}

}  // namespace finmamba
