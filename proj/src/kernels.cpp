#include "finmamba/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Core>

#include "finmamba/errors.hpp"

namespace finmamba::kernels {

std::vector<double> average_ranks(std::span<const double> series) {
    const std::size_t n = series.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return series[a] < series[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && series[order[j + 1]] == series[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

namespace {

struct RankedRow {
    std::vector<double> ranks;
    bool has_ties = false;
    bool constant = false;
};

RankedRow rank_row(std::span<const double> series) {
    RankedRow r;
    r.ranks = average_ranks(series);
    std::vector<double> sorted(series.begin(), series.end());
    std::sort(sorted.begin(), sorted.end());
    r.has_ties = std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
    r.constant = !sorted.empty() && sorted.front() == sorted.back();
    return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        sab += (a[k] - ma) * (b[k] - mb);
        saa += (a[k] - ma) * (a[k] - ma);
        sbb += (b[k] - mb) * (b[k] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

double pair_similarity(const RankedRow& a, const RankedRow& b) {
    if (a.constant || b.constant) return 0.0;
    if (a.has_ties || b.has_ties) return std::clamp(pearson(a.ranks, b.ranks), -1.0, 1.0);
    // Tie-free ranks are integers, so the numerator is exact.
    const double len = static_cast<double>(a.ranks.size());
    double d2 = 0.0;
    for (std::size_t k = 0; k < a.ranks.size(); ++k) {
        const double d = a.ranks[k] - b.ranks[k];
        d2 += d * d;
    }
    const double denom = len * (len * len - 1.0);
    return (denom - 6.0 * d2) / denom;
}

SpearmanResult finish(const std::vector<RankedRow>& rows, Tensor q) {
    SpearmanResult out;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].constant) out.constant_rows.push_back(i);
    out.q = std::move(q);
    return out;
}

}  // namespace

SpearmanResult spearman_matrix(const Tensor& series) {
    const auto n = static_cast<std::ptrdiff_t>(series.dim(0));
    std::vector<RankedRow> rows(series.dim(0));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) rows[i] = rank_row(series.row(i));

    Tensor q({series.dim(0), series.dim(0)});
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        q(i, i) = 1.0;
        for (std::ptrdiff_t j = i + 1; j < n; ++j) {
            const double s = pair_similarity(rows[i], rows[j]);
            q(i, j) = s;
            q(j, i) = s;
        }
    }
    return finish(rows, std::move(q));
}

SpearmanResult spearman_matrix_serial(const Tensor& series) {
    const std::size_t n = series.dim(0);
    std::vector<RankedRow> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) rows.push_back(rank_row(series.row(i)));
    Tensor q({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        q(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = pair_similarity(rows[i], rows[j]);
            q(i, j) = s;
            q(j, i) = s;
        }
    }
    return finish(rows, std::move(q));
}

// ---- selective scan ------------------------------------------------------------

namespace {

void check_scan_shapes(const ScanInputs& in) {
    const auto& xs = in.x.shape();
    if (xs.size() != 3 || in.delta.shape() != xs) throw ContractError("scan: x/delta must be [N, L, D]");
    if (in.a.rank() != 2 || in.a.dim(0) != xs[2]) throw ContractError("scan: A must be [D, S]");
    const std::size_t s = in.a.dim(1);
    const std::vector<std::size_t> bs{xs[0], xs[1], s};
    if (in.b.shape() != bs || in.c.shape() != bs) throw ContractError("scan: B/C must be [N, L, S]");
}

// One (sequence, channel) recurrence. `h` is the S-wide carry; `trace`, when
// set, receives the state after every step with stride D*S.
using Packet = Eigen::Array<double, 8, 1>;

// decay[k] = exp(dt * a[k]) for one state row, computed in zero-padded blocks of 8.
inline void decay_row(const double* arow, double dt, double* decay, std::size_t s) {
    Packet block;
    for (std::size_t k0 = 0; k0 < s; k0 += 8) {
        const std::size_t m = std::min<std::size_t>(8, s - k0);
        block.setZero();
        std::copy(arow + k0, arow + k0 + m, block.data());
        const Packet e = (dt * block).exp();
        std::copy(e.data(), e.data() + m, decay + k0);
    }
}

// `h` holds 2*S doubles: the state and a scratch row for the decay factors.
inline void scan_channel(const ScanInputs& in, std::size_t i, std::size_t d, double* h, double* trace,
                         Tensor& y) {
    const std::size_t len = in.x.dim(1), dm = in.x.dim(2), s = in.a.dim(1);
    const double* arow = in.a.data() + d * s;
    double* decay = h + s;
    std::fill(h, h + s, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
        const double dt = in.delta(i, t, d);
        const double u = dt * in.x(i, t, d);
        const double* bt = in.b.data() + (i * len + t) * s;
        const double* ct = in.c.data() + (i * len + t) * s;
        decay_row(arow, dt, decay, s);
        double acc = 0.0;
        for (std::size_t k = 0; k < s; ++k) {
            h[k] = decay[k] * h[k] + u * bt[k];
            acc += ct[k] * h[k];
        }
        y(i, t, d) = acc;
        if (trace) std::copy(h, h + s, trace + ((i * len + t) * dm + d) * s);
    }
}

}  // namespace

Tensor selective_scan(const ScanInputs& in, Tensor* states) {
    check_scan_shapes(in);
    const std::size_t n = in.x.dim(0), len = in.x.dim(1), dm = in.x.dim(2), s = in.a.dim(1);
    Tensor y({n, len, dm});
    double* trace = nullptr;
    if (states) {
        *states = Tensor({n, len, dm, s});
        trace = states->data();
    }
    const auto work = static_cast<std::ptrdiff_t>(n * dm);
#pragma omp parallel
    {
        std::vector<double> h(2 * s);
#pragma omp for schedule(static)
        for (std::ptrdiff_t w = 0; w < work; ++w)
            scan_channel(in, static_cast<std::size_t>(w) / dm, static_cast<std::size_t>(w) % dm, h.data(), trace,
                         y);
    }
    return y;
}

Tensor selective_scan_serial(const ScanInputs& in) {
    check_scan_shapes(in);
    const std::size_t n = in.x.dim(0), len = in.x.dim(1), dm = in.x.dim(2), s = in.a.dim(1);
    Tensor y({n, len, dm});
    std::vector<double> h(2 * s);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < dm; ++d) scan_channel(in, i, d, h.data(), nullptr, y);
    return y;
}

std::size_t selective_scan_workspace_bytes(std::size_t n, std::size_t len, std::size_t d, std::size_t s) {
    // state and decay rows per live channel plus the output sequence
    return sizeof(double) * (2 * d * s + n * len * d);
}

ScanGrads selective_scan_backward(const ScanInputs& in, const Tensor& states, const Tensor& grad_y) {
    check_scan_shapes(in);
    const std::size_t n = in.x.dim(0), len = in.x.dim(1), dm = in.x.dim(2), s = in.a.dim(1);
    ScanGrads g{Tensor::like(in.x), Tensor::like(in.delta), Tensor::like(in.a), Tensor::like(in.b),
                Tensor::like(in.c)};
    // Per-sequence partials for the tensors shared across sequences, reduced in
    // sequence order afterwards so the result does not depend on thread count.
    std::vector<Tensor> ga_parts(n, Tensor::like(in.a));
    const auto ns = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel
    {
        std::vector<double> carry(s), decay(s);
#pragma omp for schedule(static)
        for (std::ptrdiff_t ii = 0; ii < ns; ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            Tensor& ga = ga_parts[i];
            for (std::size_t d = 0; d < dm; ++d) {
                const double* arow = in.a.data() + d * s;
                std::fill(carry.begin(), carry.end(), 0.0);
                for (std::size_t tt = len; tt-- > 0;) {
                    const double dt = in.delta(i, tt, d);
                    const double xt = in.x(i, tt, d);
                    const double gy = grad_y(i, tt, d);
                    const double* bt = in.b.data() + (i * len + tt) * s;
                    const double* ct = in.c.data() + (i * len + tt) * s;
                    double* gbt = g.b.data() + (i * len + tt) * s;
                    double* gct = g.c.data() + (i * len + tt) * s;
                    const double* ht = states.data() + ((i * len + tt) * dm + d) * s;
                    const double* hprev = tt > 0 ? states.data() + ((i * len + tt - 1) * dm + d) * s : nullptr;
                    decay_row(arow, dt, decay.data(), s);
                    double gdelta = 0.0, gx = 0.0;
                    for (std::size_t k = 0; k < s; ++k) {
                        gct[k] += gy * ht[k];
                        const double gh = carry[k] + gy * ct[k];
                        if (hprev) {
                            const double gdecay = gh * hprev[k] * decay[k];
                            gdelta += gdecay * arow[k];
                            ga(d, k) += gdecay * dt;
                        }
                        gdelta += gh * bt[k] * xt;
                        gbt[k] += gh * dt * xt;
                        gx += gh * dt * bt[k];
                        carry[k] = gh * decay[k];
                    }
                    g.delta(i, tt, d) += gdelta;
                    g.x(i, tt, d) += gx;
                }
            }
        }
    }
    for (const Tensor& part : ga_parts)
        for (std::size_t k = 0; k < part.size(); ++k) g.a[k] += part[k];
    return g;
}

// ---- graph attention -------------------------------------------------------------

namespace {

inline void attention_row(std::span<const double> src, std::span<const double> dst,
                          std::span<const unsigned char> mask, std::size_t n, double slope, std::size_t i,
                          double* out) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        if (!mask[i * n + j]) continue;
        const double e = src[i] + dst[j];
        out[j] = e > 0 ? e : slope * e;
        mx = std::max(mx, out[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (!mask[i * n + j]) {
            out[j] = 0.0;
            continue;
        }
        out[j] = std::exp(out[j] - mx);
        sum += out[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= sum;
}

inline void attend_row(const Tensor& alpha, const Tensor& values, std::size_t i, Tensor& out) {
    const std::size_t n = values.dim(0), width = values.size() / n;
    double* o = out.data() + i * width;
    for (std::size_t j = 0; j < n; ++j) {
        const double w = alpha(i, j);
        if (w == 0.0) continue;
        const double* v = values.data() + j * width;
        for (std::size_t c = 0; c < width; ++c) o[c] += w * v[c];
    }
}

}  // namespace

Tensor masked_attention(std::span<const double> src, std::span<const double> dst,
                        std::span<const unsigned char> mask, std::size_t n, double negative_slope) {
    Tensor alpha({n, n});
    const auto nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < nn; ++i)
        attention_row(src, dst, mask, n, negative_slope, static_cast<std::size_t>(i), alpha.data() + i * n);
    return alpha;
}

Tensor masked_attention_serial(std::span<const double> src, std::span<const double> dst,
                               std::span<const unsigned char> mask, std::size_t n, double negative_slope) {
    Tensor alpha({n, n});
    for (std::size_t i = 0; i < n; ++i) attention_row(src, dst, mask, n, negative_slope, i, alpha.data() + i * n);
    return alpha;
}

Tensor attend(const Tensor& alpha, const Tensor& values) {
    Tensor out = Tensor::like(values);
    const auto n = static_cast<std::ptrdiff_t>(values.dim(0));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) attend_row(alpha, values, static_cast<std::size_t>(i), out);
    return out;
}

Tensor attend_serial(const Tensor& alpha, const Tensor& values) {
    Tensor out = Tensor::like(values);
    for (std::size_t i = 0; i < values.dim(0); ++i) attend_row(alpha, values, i, out);
    return out;
}

// ---- dense attention reference -------------------------------------------------------

Tensor dense_attention(const Tensor& x) {
    const std::size_t n = x.dim(0), len = x.dim(1), d = x.dim(2);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor y = Tensor::like(x);
    std::vector<double> scores(len * len);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.data() + i * len * d;
        for (std::size_t p = 0; p < len; ++p)
            for (std::size_t q = 0; q < len; ++q) {
                double acc = 0.0;
                for (std::size_t c = 0; c < d; ++c) acc += xi[p * d + c] * xi[q * d + c];
                scores[p * len + q] = acc * inv_sqrt;
            }
        for (std::size_t p = 0; p < len; ++p) {
            double* row = scores.data() + p * len;
            const double mx = *std::max_element(row, row + len);
            double sum = 0.0;
            for (std::size_t q = 0; q < len; ++q) sum += (row[q] = std::exp(row[q] - mx));
            double* out = y.data() + (i * len + p) * d;
            for (std::size_t q = 0; q < len; ++q) {
                const double w = row[q] / sum;
                for (std::size_t c = 0; c < d; ++c) out[c] += w * xi[q * d + c];
            }
        }
    }
    return y;
}

std::size_t dense_attention_workspace_bytes(std::size_t n, std::size_t len, std::size_t d) {
    return sizeof(double) * (len * len + n * len * d);
}

}  // namespace finmamba::kernels
