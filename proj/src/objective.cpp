#include "finmamba/objective.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "finmamba/errors.hpp"
#include "finmamba/kernels.hpp"

namespace finmamba {

namespace {

void check_same_length(std::span<const double> y, std::span<const double> r) {
    if (y.size() != r.size()) throw ContractError("scores and returns differ in length");
}

struct StockMoments {
    double mean_z, mean_s, var_z, var_s;
};

StockMoments moments(const double* z, const double* s, std::size_t m) {
    StockMoments out{};
    for (std::size_t k = 0; k < m; ++k) {
        out.mean_z += z[k];
        out.mean_s += s[k];
    }
    out.mean_z /= static_cast<double>(m);
    out.mean_s /= static_cast<double>(m);
    for (std::size_t k = 0; k < m; ++k) {
        out.var_z += (z[k] - out.mean_z) * (z[k] - out.mean_z);
        out.var_s += (s[k] - out.mean_s) * (s[k] - out.mean_s);
    }
    out.var_z /= static_cast<double>(m);
    out.var_s /= static_cast<double>(m);
    return out;
}

void check_gib_shapes(const Tensor& z, const Tensor& s) {
    if (!z.same_shape(s) || z.rank() < 2) throw ContractError("loss_gib: z and s must share an [N, ...] shape");
}

}  // namespace

double pairwise_hinge(std::span<const double> y, std::span<const double> r) {
    check_same_length(y, r);
    double h = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j) h += std::max(0.0, -(y[i] - y[j]) * (r[i] - r[j]));
    return h;
}

double loss_rp(std::span<const double> y, std::span<const double> r, double eta) {
    check_same_length(y, r);
    double mse = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) mse += (y[i] - r[i]) * (y[i] - r[i]);
    return mse + eta * pairwise_hinge(y, r);
}

double loss_gib(const Tensor& z, const Tensor& s) {
    check_gib_shapes(z, s);
    const std::size_t n = z.dim(0), m = z.size() / n;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto mo = moments(z.data() + i * m, s.data() + i * m, m);
        const double diff = mo.mean_z - mo.mean_s;
        total += diff * diff / std::max(mo.var_z + mo.var_s, kGibFloor);
    }
    return total;
}

double loss_total(double rp, double gib, const LossWeights& weights, std::size_t day) {
    if (!std::isfinite(rp) || !std::isfinite(gib))
        throw TrainingDivergence("non-finite loss component (rp=" + std::to_string(rp) + ", gib=" +
                                     std::to_string(gib) + ") on day " + std::to_string(day),
                                 day);
    return rp + weights.lambda * gib;
}

double rank_ic(std::span<const double> scores, std::span<const double> returns) {
    check_same_length(scores, returns);
    const auto a = kernels::average_ranks(scores);
    const auto b = kernels::average_ranks(returns);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        sab += (a[k] - ma) * (b[k] - mb);
        saa += (a[k] - ma) * (a[k] - ma);
        sbb += (b[k] - mb) * (b[k] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

ad::Var loss_rp(ad::Tape& tape, ad::Var y, std::span<const double> r, double eta) {
    const Tensor& yv = y.value();
    check_same_length(yv.flat(), r);
    std::vector<double> returns(r.begin(), r.end());
    ad::Node* yn = y.node();
    return tape.record(Tensor({1}, loss_rp(yv.flat(), r, eta)), {y}, [yn, returns, eta](const Tensor& g) {
        const Tensor& v = yn->value;
        Tensor& gy = yn->grad_buffer();
        const std::size_t n = v.size();
        for (std::size_t i = 0; i < n; ++i) gy[i] += g[0] * 2.0 * (v[i] - returns[i]);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double dr = returns[i] - returns[j];
                if ((v[i] - v[j]) * dr < 0.0) {
                    gy[i] -= g[0] * eta * dr;
                    gy[j] += g[0] * eta * dr;
                }
            }
    });
}

ad::Var loss_gib(ad::Tape& tape, ad::Var z, const Tensor& s) {
    check_gib_shapes(z.value(), s);
    ad::Node* zn = z.node();
    auto raw = std::make_shared<Tensor>(s);
    return tape.record(Tensor({1}, loss_gib(z.value(), s)), {z}, [zn, raw](const Tensor& g) {
        const Tensor& zv = zn->value;
        Tensor& gz = zn->grad_buffer();
        const std::size_t n = zv.dim(0), m = zv.size() / n;
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < n; ++i) {
            const double* zi = zv.data() + i * m;
            const auto mo = moments(zi, raw->data() + i * m, m);
            const double diff = mo.mean_z - mo.mean_s;
            const double denom_raw = mo.var_z + mo.var_s;
            const bool floored = denom_raw < kGibFloor;
            const double denom = floored ? kGibFloor : denom_raw;
            const double d_mean = 2.0 * diff / denom * inv_m;
            const double d_var = floored ? 0.0 : -diff * diff / (denom * denom);
            for (std::size_t k = 0; k < m; ++k)
                gz[i * m + k] += g[0] * (d_mean + d_var * 2.0 * (zi[k] - mo.mean_z) * inv_m);
        }
    });
}

}  // namespace finmamba
