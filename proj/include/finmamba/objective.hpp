#pragma once

#include <span>
#include <vector>

#include "finmamba/autodiff.hpp"

namespace finmamba {

struct LossWeights {
    double eta = 3.0;     // pairwise hinge weight
    double lambda = 1.0;  // information-bottleneck weight
};

inline constexpr double kGibFloor = 1e-8;

/// Per-day squared error plus eta times the hinge over all ordered pairs.
double loss_rp(std::span<const double> y, std::span<const double> r, double eta);
/// Hinge term alone (eta = 1, no squared error).
double pairwise_hinge(std::span<const double> y, std::span<const double> r);

/// sum_i (mean(z_i) - mean(s_i))^2 / max(var(z_i) + var(s_i), 1e-8), with
/// mean/var over the L*F block of each stock and population variance.
double loss_gib(const Tensor& z, const Tensor& s);

/// rp + lambda * gib; throws TrainingDivergence on a non-finite component.
double loss_total(double rp, double gib, const LossWeights& weights, std::size_t day = 0);

/// Cross-sectional Spearman correlation between scores and realised returns.
double rank_ic(std::span<const double> scores, std::span<const double> returns);

// ---- tape ops ------------------------------------------------------------------

ad::Var loss_rp(ad::Tape& tape, ad::Var y, std::span<const double> r, double eta);
ad::Var loss_gib(ad::Tape& tape, ad::Var z, const Tensor& s);

}  // namespace finmamba
