#pragma once

#include <span>
#include <string>
#include <vector>

#include "finmamba/model.hpp"

namespace finmamba {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;  // max|analytic - fd| / max(|analytic|_inf, |fd|_inf)
    double max_abs_error = 0.0;
    bool passed = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    std::vector<std::string> failures;
    double tolerance = 0.0;
    bool passed = false;
};

/// Mean total loss over `probe` as a function of the registry values, with
/// every day's top-K mask frozen at the unperturbed point.
struct ProbeObjective {
    const ModelParams& params;
    std::span<const DayInput> probe;
    LossSettings settings;
    std::vector<std::vector<unsigned char>> masks;

    ProbeObjective(const ModelParams& p, std::span<const DayInput> days, const LossSettings& s);
    double value(const ModelParams& at) const;
    /// Analytic gradient in registry order.
    std::vector<Tensor> gradient() const;
};

/// Compares analytic gradients with central differences for every registry
/// tensor; a tensor passes iff its relative error is strictly below `tolerance`.
GradCheckReport grad_check(const ModelParams& params, std::span<const DayInput> probe, const LossSettings& settings,
                           double tolerance, double step = 1e-4);

}  // namespace finmamba
