#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "jkge/errors.hpp"
#include "jkge/metrics.hpp"

namespace jkge {

/// Exact partials of a metric with respect to the simulated values. Entries
/// are reported only at usable positions (non-missing in both series and
/// valid in both benchmarks); all other entries are exactly zero.
struct GradientVector {
    std::vector<double> values;
    MetricId metric = MetricId::mse;
    std::vector<std::uint8_t> usable;
};

namespace detail {

/// Window/section counts of the joint non-missing mask: denominators of the
/// linear benchmark operators.
inline std::vector<std::size_t> operator_counts(BenchmarkMethod method, std::span<const std::uint8_t> missing) {
    const std::size_t n = missing.size();
    std::vector<std::size_t> cnt(n, 0);
    if (method.kind == BenchmarkMethod::Kind::moving_mean) {
        const std::size_t k = std::size_t(method.length - 1) / 2;
        std::size_t c = 0;
        for (std::size_t i = 0; i < std::min(k, n); ++i) c += !missing[i];
        for (std::size_t t = 0; t < n; ++t) {
            if (t + k < n) c += !missing[t + k];
            cnt[t] = c;
            if (t >= k) c -= !missing[t - k];
        }
    } else {
        const std::size_t n_s = method.kind == BenchmarkMethod::Kind::ltm ? n : std::size_t(method.length);
        for (std::size_t lo = 0; lo < n; lo += n_s) {
            const std::size_t hi = std::min(lo + n_s, n);
            std::size_t c = 0;
            for (std::size_t t = lo; t < hi; ++t) c += !missing[t];
            for (std::size_t t = lo; t < hi; ++t) cnt[t] = c;
        }
    }
    return cnt;
}

/// q_u = sum_t c_t * dB_t/ds_u for the linear benchmark operator B; the
/// centered window makes the operator symmetric, so this is a windowed
/// (or per-section) average of c.
inline std::vector<double> transpose_apply(BenchmarkMethod method, std::span<const double> c,
                                           std::span<const std::size_t> cnt) {
    const std::size_t n = c.size();
    std::vector<double> q(n, 0.0);
    if (method.kind == BenchmarkMethod::Kind::moving_mean) {
        const std::size_t k = std::size_t(method.length - 1) / 2;
        std::vector<double> prefix(n + 1, 0.0);
        for (std::size_t t = 0; t < n; ++t)
            prefix[t + 1] = prefix[t] + (cnt[t] > 0 ? c[t] / double(cnt[t]) : 0.0);
        for (std::size_t u = 0; u < n; ++u) {
            const std::size_t lo = u >= k ? u - k : 0;
            const std::size_t hi = std::min(u + k + 1, n);
            q[u] = prefix[hi] - prefix[lo];
        }
    } else {
        const std::size_t n_s = method.kind == BenchmarkMethod::Kind::ltm ? n : std::size_t(method.length);
        for (std::size_t lo = 0; lo < n; lo += n_s) {
            const std::size_t hi = std::min(lo + n_s, n);
            double s = 0.0;
            for (std::size_t t = lo; t < hi; ++t) s += c[t];
            const double v = cnt[lo] > 0 ? s / double(cnt[lo]) : 0.0;
            for (std::size_t t = lo; t < hi; ++t) q[t] = v;
        }
    }
    return q;
}

}  // namespace detail

inline GradientVector grad_metric(MetricId metric, const PairedSeries& pair, BenchmarkMethod method,
                                  double eps_b = default_eps_b) {
    GradientVector g;
    g.metric = metric;
    g.values.assign(pair.size(), 0.0);

    switch (metric) {
        case MetricId::mse:
        case MetricId::nse: {
            const auto u = detail::usable_mask(pair);
            if (u.n == 0) throw DegenerateInputError("no usable positions");
            g.usable = u.usable;
            if (metric == MetricId::mse) {
                for (std::size_t t = 0; t < pair.size(); ++t)
                    if (u.usable[t]) g.values[t] = 2.0 * (pair.sim.values[t] - pair.obs.values[t]) / double(u.n);
            } else {
                const double mu_o = detail::masked_mean(pair.obs.values, u.usable, u.n);
                double acc_o = 0.0;
                for (std::size_t t = 0; t < pair.size(); ++t)
                    if (u.usable[t]) {
                        const double d = pair.obs.values[t] - mu_o;
                        acc_o += d * d;
                    }
                if (acc_o == 0.0) throw GradientUndefinedError("observed variance is zero");
                for (std::size_t t = 0; t < pair.size(); ++t)
                    if (u.usable[t]) g.values[t] = -2.0 * (pair.sim.values[t] - pair.obs.values[t]) / acc_o;
            }
            return g;
        }

        case MetricId::kge_ss: {
            const auto u = detail::usable_mask(pair);
            if (u.n == 0) throw DegenerateInputError("no usable positions");
            g.usable = u.usable;
            const auto c = stationary_components(pair);
            if (c.sigma_s == 0.0)
                throw GradientUndefinedError("sigma_s is zero at the evaluation point");
            const double root = std::sqrt((c.M + c.V + c.C) / 2.0);
            if (root < 1e-12) throw GradientUndefinedError("too close to the optimum (square-root kink)");
            const double n = double(u.n);
            for (std::size_t t = 0; t < pair.size(); ++t) {
                if (!u.usable[t]) continue;
                const double ds = pair.sim.values[t] - c.mu_s;
                const double dd = pair.obs.values[t] - c.mu_o;
                const double dM = -2.0 * (1.0 - c.beta) / (n * c.mu_o);
                const double dsig = ds / (n * c.sigma_s);
                const double dV = -2.0 * (1.0 - c.alpha) * dsig / c.sigma_o;
                const double drho = dd / (n * c.sigma_s * c.sigma_o) - c.rho * dsig / c.sigma_s;
                const double dC = -2.0 * (1.0 - c.rho) * drho;
                g.values[t] = -(dM + dV + dC) / (4.0 * root);
            }
            return g;
        }

        case MetricId::jkge_ss:
        case MetricId::jkge_aug: {
            const auto p = detail::nonstationary_parts(pair, method, eps_b);
            g.usable = p.use;
            if (p.psi_s == 0.0 || p.psi_o == 0.0)
                throw GradientUndefinedError("anomaly RMS is zero at the evaluation point");

            const std::size_t len = pair.size();
            const double n = double(p.n);
            const auto cnt = detail::operator_counts(method, p.joint_missing);

            std::vector<double> h(len, 0.0), as(len, 0.0), ao(len, 0.0);
            for (std::size_t t = 0; t < len; ++t) {
                if (!p.use[t]) continue;
                bool guarded = false;
                const double r = detail::mstar_residual(p.b_o[t], p.b_s[t], eps_b, guarded);
                h[t] = r / detail::guard_away_from_zero(p.b_o[t], eps_b);
                as[t] = pair.sim.values[t] - p.b_s[t];
                ao[t] = pair.obs.values[t] - p.b_o[t];
            }
            const auto th = detail::transpose_apply(method, h, cnt);
            const auto tas = detail::transpose_apply(method, as, cnt);
            const auto tao = detail::transpose_apply(method, ao, cnt);

            const double vstar = (1.0 - p.alpha_star) * (1.0 - p.alpha_star);
            const double cstar = (1.0 - p.rho_star) * (1.0 - p.rho_star);

            double inner = p.mstar + vstar + cstar;
            double dM_const = 0.0;
            double stat_m = 0.0;
            double mu_o = 0.0;
            double beta = 0.0;
            if (metric == MetricId::jkge_aug) {
                double mu_s = 0.0;
                for (std::size_t t = 0; t < len; ++t)
                    if (p.use[t]) {
                        mu_s += pair.sim.values[t];
                        mu_o += pair.obs.values[t];
                    }
                mu_s /= n;
                mu_o /= n;
                if (mu_o == 0.0) throw DegenerateInputError("observed mean is zero; beta undefined");
                beta = mu_s / mu_o;
                stat_m = (1.0 - beta) * (1.0 - beta);
                inner += stat_m;
                dM_const = -2.0 * (1.0 - beta) / (n * mu_o);
            }
            const double root = std::sqrt(inner / 2.0);
            if (root < 1e-12) throw GradientUndefinedError("too close to the optimum (square-root kink)");

            for (std::size_t t = 0; t < len; ++t) {
                if (!p.use[t]) continue;
                const double dMstar = -2.0 * th[t] / n;
                const double dpsi_s = (as[t] - tas[t]) / (n * p.psi_s);
                const double dVstar = -2.0 * (1.0 - p.alpha_star) * dpsi_s / p.psi_o;
                const double dP = (ao[t] - tao[t]) / n;
                const double drho = dP / (p.psi_s * p.psi_o) - p.rho_star * dpsi_s / p.psi_s;
                const double dCstar = -2.0 * (1.0 - p.rho_star) * drho;
                g.values[t] = -(dM_const + dMstar + dVstar + dCstar) / (4.0 * root);
            }
            return g;
        }

        default:
            throw ArgumentError("no analytic gradient for metric '" + metric_str(metric) + "'");
    }
}

/// Max relative mismatch between the analytic gradient and a central
/// difference at every usable position; the per-position step is
/// h * max(1, |s_t|) and the denominator max(|analytic|, |numeric|, 1e-12).
inline double fd_check(MetricId metric, const PairedSeries& pair, BenchmarkMethod method, double h,
                       double eps_b = default_eps_b) {
    if (!(h > 0)) throw ArgumentError("fd step must be positive");
    const auto g = grad_metric(metric, pair, method, eps_b);

    PairedSeries work = pair;
    double worst = 0.0;
    for (std::size_t t = 0; t < pair.size(); ++t) {
        if (!g.usable[t]) continue;
        const double s0 = pair.sim.values[t];
        const double dt = h * std::max(1.0, std::abs(s0));
        work.sim.values[t] = s0 + dt;
        const double fp = eval_metric(metric, work, method, eps_b);
        work.sim.values[t] = s0 - dt;
        const double fm = eval_metric(metric, work, method, eps_b);
        work.sim.values[t] = s0;
        const double numeric = (fp - fm) / (2.0 * dt);
        const double denom = std::max({std::abs(g.values[t]), std::abs(numeric), 1e-12});
        worst = std::max(worst, std::abs(g.values[t] - numeric) / denom);
    }
    return worst;
}

}  // namespace jkge
