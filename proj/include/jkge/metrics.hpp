#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jkge/benchmark.hpp"
#include "jkge/errors.hpp"
#include "jkge/series.hpp"

namespace jkge {

constexpr double default_eps_b = 1e-8;      // benchmark-ratio guard (mm/day space)
constexpr double default_eps_sigma = 1e-8;  // segment-sigma ratio guard
constexpr double default_log_floor = 1e-6;  // mm/day

/// Long-term-mean decomposition: beta = mu_s/mu_o, alpha = sigma_s/sigma_o,
/// rho the cross-correlation, and M = (1-beta)^2, V = (1-alpha)^2,
/// C = (1-rho)^2.
struct StationaryComponents {
    double mu_s = 0, mu_o = 0;
    double sigma_s = 0, sigma_o = 0;
    double beta = 0, alpha = 0, rho = 0;
    double M = 0, V = 0, C = 0;
};

/// Benchmark-centred decomposition: psi the root-mean-square anomalies,
/// alpha_star = psi_s/psi_o, rho_star the anomaly cross-correlation,
/// Mstar the benchmark-ratio bias, Vstar = (1-alpha_star)^2,
/// Cstar = (1-rho_star)^2. When an anomaly RMS is zero, alpha_star and
/// rho_star are set to 0 (the benchmark-only limit).
struct NonstationaryComponents {
    double psi_s = 0, psi_o = 0;
    double alpha_star = 0, rho_star = 0;
    double Mstar = 0, Vstar = 0, Cstar = 0;
    std::size_t eps_b_activations = 0;          // positions where |b_o| < eps_b
    bool degenerate_perfect_benchmark = false;  // psi_s = psi_o = 0 with b_s = b_o
};

namespace detail {

struct UsableStats {
    std::vector<std::uint8_t> usable;
    std::size_t n = 0;
};

inline UsableStats usable_mask(const PairedSeries& pair) {
    UsableStats u;
    u.usable.resize(pair.size());
    for (std::size_t t = 0; t < pair.size(); ++t) {
        u.usable[t] = pair.usable(t);
        u.n += u.usable[t];
    }
    return u;
}

inline double masked_mean(std::span<const double> v, std::span<const std::uint8_t> use, std::size_t n) {
    KahanSum acc;
    for (std::size_t t = 0; t < v.size(); ++t)
        if (use[t]) acc.add(v[t]);
    return acc.value() / double(n);
}

/// sign-preserving clamp away from zero; zero counts as positive
inline double guard_away_from_zero(double b, double eps) {
    if (b >= eps || b <= -eps) return b;
    return b < 0.0 ? -eps : eps;
}

/// Benchmark-ratio residual 1 - b_s/b_o with the zero-denominator guard.
/// Guarded positions use the algebraically equal difference form
/// (b_o - b_s)/g; matching benchmarks (both zero across a dry section)
/// still score a perfect 0.
inline double mstar_residual(double b_o, double b_s, double eps, bool& guarded) {
    guarded = b_o < eps && b_o > -eps;
    const double g = guard_away_from_zero(b_o, eps);
    return guarded ? (b_o - b_s) / g : 1.0 - b_s / g;
}

/// Everything the non-stationary metrics and their gradients need:
/// joint-masked benchmarks of both series, the evaluation mask, and the
/// benchmark-centred anomaly statistics.
struct NsParts {
    std::vector<std::uint8_t> joint_missing;
    std::vector<double> b_o, b_s;
    std::vector<std::uint8_t> valid_o, valid_s;
    std::vector<std::uint8_t> use;  // usable and valid in both benchmarks
    std::size_t n = 0;
    double mstar = 0;
    double psi_s = 0, psi_o = 0;
    double alpha_star = 0, rho_star = 0;
    std::size_t eps_b_activations = 0;
};

inline NsParts nonstationary_parts(const PairedSeries& pair, BenchmarkMethod method, double eps_b) {
    if (!(eps_b > 0)) throw ArgumentError("eps_b must be positive");
    const std::size_t n = pair.size();
    NsParts p;
    p.joint_missing.resize(n);
    for (std::size_t t = 0; t < n; ++t)
        p.joint_missing[t] = pair.obs.missing[t] || pair.sim.missing[t];

    p.b_o.resize(n);
    p.b_s.resize(n);
    p.valid_o.resize(n);
    p.valid_s.resize(n);
    // both benchmarks on the same index set: positions missing in either
    // series are excluded from both constructions
    benchmark_into(pair.obs.values, p.joint_missing, method, p.b_o, p.valid_o);
    benchmark_into(pair.sim.values, p.joint_missing, method, p.b_s, p.valid_s);

    p.use.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        p.use[t] = !p.joint_missing[t] && p.valid_o[t] && p.valid_s[t];
        p.n += p.use[t];
    }
    if (p.n == 0) throw DegenerateInputError("no usable positions under this benchmark method");

    KahanSum acc_m, acc_s, acc_o, acc_so;
    for (std::size_t t = 0; t < n; ++t) {
        if (!p.use[t]) continue;
        bool guarded = false;
        const double r = mstar_residual(p.b_o[t], p.b_s[t], eps_b, guarded);
        p.eps_b_activations += guarded;
        acc_m.add(r * r);
        const double as = pair.sim.values[t] - p.b_s[t];
        const double ao = pair.obs.values[t] - p.b_o[t];
        acc_s.add(as * as);
        acc_o.add(ao * ao);
        acc_so.add(as * ao);
    }
    p.mstar = acc_m.value() / double(p.n);
    p.psi_s = std::sqrt(acc_s.value() / double(p.n));
    p.psi_o = std::sqrt(acc_o.value() / double(p.n));
    if (p.psi_s == 0.0 || p.psi_o == 0.0) {
        p.alpha_star = 0.0;
        p.rho_star = 0.0;
    } else {
        p.alpha_star = p.psi_s / p.psi_o;
        p.rho_star = (acc_so.value() / double(p.n)) / (p.psi_s * p.psi_o);
    }
    return p;
}

/// Long-term water-balance term M over the same positions the
/// non-stationary sums use (benchmark-invalid positions excluded).
inline double stationary_m_over(const PairedSeries& pair, const NsParts& p) {
    KahanSum sum_s, sum_o;
    for (std::size_t t = 0; t < pair.size(); ++t)
        if (p.use[t]) {
            sum_s.add(pair.sim.values[t]);
            sum_o.add(pair.obs.values[t]);
        }
    const double mu_s = sum_s.value() / double(p.n);
    const double mu_o = sum_o.value() / double(p.n);
    if (mu_o == 0.0) throw DegenerateInputError("observed mean is zero; beta undefined");
    const double beta = mu_s / mu_o;
    return (1.0 - beta) * (1.0 - beta);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stationary metrics

inline double mse(const PairedSeries& pair) {
    KahanSum acc;
    std::size_t n = 0;
    for (std::size_t t = 0; t < pair.size(); ++t) {
        if (!pair.usable(t)) continue;
        const double r = pair.sim.values[t] - pair.obs.values[t];
        acc.add(r * r);
        ++n;
    }
    if (n == 0) throw DegenerateInputError("no usable positions");
    return acc.value() / double(n);
}

inline StationaryComponents stationary_components(const PairedSeries& pair) {
    const auto u = detail::usable_mask(pair);
    if (u.n == 0) throw DegenerateInputError("no usable positions");

    StationaryComponents c;
    c.mu_s = detail::masked_mean(pair.sim.values, u.usable, u.n);
    c.mu_o = detail::masked_mean(pair.obs.values, u.usable, u.n);

    KahanSum acc_s, acc_o, acc_so;
    for (std::size_t t = 0; t < pair.size(); ++t) {
        if (!u.usable[t]) continue;
        const double ds = pair.sim.values[t] - c.mu_s;
        const double dd = pair.obs.values[t] - c.mu_o;
        acc_s.add(ds * ds);
        acc_o.add(dd * dd);
        acc_so.add(ds * dd);
    }
    c.sigma_s = std::sqrt(acc_s.value() / double(u.n));
    c.sigma_o = std::sqrt(acc_o.value() / double(u.n));

    if (c.mu_o == 0.0) throw DegenerateInputError("observed mean is zero; beta undefined");
    if (c.sigma_o == 0.0) throw DegenerateInputError("observed variance is zero");
    c.beta = c.mu_s / c.mu_o;
    if (c.sigma_s == 0.0) {
        c.alpha = 0.0;
        c.rho = 0.0;
    } else {
        c.alpha = c.sigma_s / c.sigma_o;
        c.rho = (acc_so.value() / double(u.n)) / (c.sigma_s * c.sigma_o);
    }
    c.M = (1.0 - c.beta) * (1.0 - c.beta);
    c.V = (1.0 - c.alpha) * (1.0 - c.alpha);
    c.C = (1.0 - c.rho) * (1.0 - c.rho);
    return c;
}

inline double nse(const PairedSeries& pair) {
    const auto u = detail::usable_mask(pair);
    if (u.n == 0) throw DegenerateInputError("no usable positions");
    const double mu_o = detail::masked_mean(pair.obs.values, u.usable, u.n);
    KahanSum acc_o, acc_r;
    for (std::size_t t = 0; t < pair.size(); ++t) {
        if (!u.usable[t]) continue;
        const double dd = pair.obs.values[t] - mu_o;
        const double r = pair.sim.values[t] - pair.obs.values[t];
        acc_o.add(dd * dd);
        acc_r.add(r * r);
    }
    if (acc_o.value() == 0.0) throw DegenerateInputError("observed variance is zero");
    return 1.0 - acc_r.value() / acc_o.value();
}

inline std::pair<double, StationaryComponents> kge_with_components(const PairedSeries& pair) {
    const auto c = stationary_components(pair);
    return {1.0 - std::sqrt(c.M + c.V + c.C), c};
}

inline double kge(const PairedSeries& pair) { return kge_with_components(pair).first; }

/// Skill-score form: 0 when the simulation is the observed long-term mean.
inline double kge_ss(const PairedSeries& pair) {
    const auto c = stationary_components(pair);
    return 1.0 - std::sqrt((c.M + c.V + c.C) / 2.0);
}

// ---------------------------------------------------------------------------
// Non-stationary metrics

namespace detail {

inline NonstationaryComponents components_from(const NsParts& p) {
    NonstationaryComponents c;
    c.psi_s = p.psi_s;
    c.psi_o = p.psi_o;
    c.alpha_star = p.alpha_star;
    c.rho_star = p.rho_star;
    c.Mstar = p.mstar;
    c.Vstar = (1.0 - c.alpha_star) * (1.0 - c.alpha_star);
    c.Cstar = (1.0 - c.rho_star) * (1.0 - c.rho_star);
    c.eps_b_activations = p.eps_b_activations;
    c.degenerate_perfect_benchmark = c.psi_s == 0.0 && c.psi_o == 0.0 && c.Mstar == 0.0;
    return c;
}

}  // namespace detail

inline NonstationaryComponents nonstationary_components(const PairedSeries& pair, BenchmarkMethod method,
                                                        double eps_b = default_eps_b) {
    return detail::components_from(detail::nonstationary_parts(pair, method, eps_b));
}

inline double jkge_ss(const PairedSeries& pair, BenchmarkMethod method, double eps_b = default_eps_b) {
    const auto c = nonstationary_components(pair, method, eps_b);
    return 1.0 - std::sqrt((c.Mstar + c.Vstar + c.Cstar) / 2.0);
}

/// Skill score augmented with the long-term water-balance term M, computed
/// over the benchmark-valid positions.
inline double jkge_aug(const PairedSeries& pair, BenchmarkMethod method, double eps_b = default_eps_b) {
    const auto p = detail::nonstationary_parts(pair, method, eps_b);
    const double m = detail::stationary_m_over(pair, p);
    const double vstar = (1.0 - p.alpha_star) * (1.0 - p.alpha_star);
    const double cstar = (1.0 - p.rho_star) * (1.0 - p.rho_star);
    return 1.0 - std::sqrt((m + p.mstar + vstar + cstar) / 2.0);
}

enum class Ablation { abl1, abl2 };

/// Ablated forms keep their printed normalisation (no /2):
/// Abl1 = 1 - sqrt(M + Mstar + Vstar), Abl2 = 1 - sqrt(M + Mstar).
inline double jkge_ablated(const PairedSeries& pair, BenchmarkMethod method, double eps_b, Ablation variant) {
    const auto p = detail::nonstationary_parts(pair, method, eps_b);
    const double m = detail::stationary_m_over(pair, p);
    const double vstar = (1.0 - p.alpha_star) * (1.0 - p.alpha_star);
    const double inner = variant == Ablation::abl1 ? m + p.mstar + vstar : m + p.mstar;
    return 1.0 - std::sqrt(inner);
}

struct MuSigmaResult {
    double value = 0;
    double Vstar_t = 0;                     // time-varying variability penalty
    std::size_t eps_sigma_activations = 0;  // positions whose segment had psi_o below the guard
};

/// Variant with a time-varying variability ratio: segment-wise anomaly
/// standard deviations are broadcast to each position and
/// Vstar = mean((1 - psi_s(t)/psi_o(t))^2), guarded where the observed
/// segment sigma falls below eps_sigma.
inline MuSigmaResult jkge_musigma(const PairedSeries& pair, BenchmarkMethod method, double eps_b = default_eps_b,
                                  double eps_sigma = default_eps_sigma) {
    if (!(eps_sigma > 0)) throw ArgumentError("eps_sigma must be positive");
    if (method.kind == BenchmarkMethod::Kind::ltm)
        throw ArgumentError("jkge_musigma requires a section-mean or moving-mean benchmark");
    const auto p = detail::nonstationary_parts(pair, method, eps_b);

    // segment sigmas on the joint-masked series, mirroring the benchmarks
    TimeSeries obs_j = pair.obs, sim_j = pair.sim;
    obs_j.missing = p.joint_missing;
    sim_j.missing = p.joint_missing;
    BenchmarkSeries bo{p.b_o, p.valid_o, method};
    BenchmarkSeries bs{p.b_s, p.valid_s, method};
    const auto sig_o = segment_sigma(obs_j, bo);
    const auto sig_s = segment_sigma(sim_j, bs);

    MuSigmaResult out;
    double acc_v = 0.0;
    for (std::size_t t = 0; t < pair.size(); ++t) {
        if (!p.use[t]) continue;
        double so = sig_o.values[t];
        if (so < eps_sigma) {
            so = eps_sigma;
            ++out.eps_sigma_activations;
        }
        const double alpha_t = sig_s.values[t] / so;
        acc_v += (1.0 - alpha_t) * (1.0 - alpha_t);
    }
    out.Vstar_t = acc_v / double(p.n);
    const double cstar = (1.0 - p.rho_star) * (1.0 - p.rho_star);
    out.value = 1.0 - std::sqrt((p.mstar + out.Vstar_t + cstar) / 2.0);
    return out;
}

// ---------------------------------------------------------------------------
// Metric naming (CLI, gradients, calibration)

enum class MetricId { mse, nse, kge, kge_ss, jkge_ss, jkge_aug, jkge_abl1, jkge_abl2, jkge_musigma };

inline std::string metric_str(MetricId m) {
    switch (m) {
        case MetricId::mse: return "mse";
        case MetricId::nse: return "nse";
        case MetricId::kge: return "kge";
        case MetricId::kge_ss: return "kge_ss";
        case MetricId::jkge_ss: return "jkge_ss";
        case MetricId::jkge_aug: return "jkge_aug";
        case MetricId::jkge_abl1: return "jkge_abl1";
        case MetricId::jkge_abl2: return "jkge_abl2";
        case MetricId::jkge_musigma: return "jkge_musigma";
    }
    return "?";
}

inline MetricId parse_metric(std::string_view s) {
    for (auto m : {MetricId::mse, MetricId::nse, MetricId::kge, MetricId::kge_ss, MetricId::jkge_ss,
                   MetricId::jkge_aug, MetricId::jkge_abl1, MetricId::jkge_abl2, MetricId::jkge_musigma})
        if (metric_str(m) == s) return m;
    throw ArgumentError("unknown metric '" + std::string(s) + "'");
}

inline double eval_metric(MetricId m, const PairedSeries& pair, BenchmarkMethod method,
                          double eps_b = default_eps_b, double eps_sigma = default_eps_sigma) {
    switch (m) {
        case MetricId::mse: return mse(pair);
        case MetricId::nse: return nse(pair);
        case MetricId::kge: return kge(pair);
        case MetricId::kge_ss: return kge_ss(pair);
        case MetricId::jkge_ss: return jkge_ss(pair, method, eps_b);
        case MetricId::jkge_aug: return jkge_aug(pair, method, eps_b);
        case MetricId::jkge_abl1: return jkge_ablated(pair, method, eps_b, Ablation::abl1);
        case MetricId::jkge_abl2: return jkge_ablated(pair, method, eps_b, Ablation::abl2);
        case MetricId::jkge_musigma: return jkge_musigma(pair, method, eps_b, eps_sigma).value;
    }
    throw ArgumentError("unknown metric");
}

// ---------------------------------------------------------------------------
// Full report

struct MetricReport {
    std::optional<double> mse, nse, kge, kge_ss;
    std::optional<double> jkge_ss, jkge_aug, jkge_abl1, jkge_abl2, jkge_musigma;
    std::optional<StationaryComponents> stationary;
    std::optional<NonstationaryComponents> nonstationary;
    BenchmarkMethod method;
    bool log_space = false;
    std::size_t n_used = 0;
    double Vstar_t = 0;
    std::size_t eps_sigma_activations = 0;
    std::map<std::string, std::string> errors;  // metric name -> reason, for absent entries
};

/// Every metric on the (optionally log-transformed) pair; constituent
/// failures surface as absent entries with reasons instead of aborting the
/// whole report.
inline MetricReport full_report(const PairedSeries& raw, BenchmarkMethod method, double eps_b = default_eps_b,
                                bool log_space = false, double floor = default_log_floor,
                                double eps_sigma = default_eps_sigma) {
    const PairedSeries pair = log_space
                                  ? PairedSeries(log_transform(raw.obs, floor), log_transform(raw.sim, floor))
                                  : raw;
    MetricReport r;
    r.method = method;
    r.log_space = log_space;
    r.n_used = pair.usable_count();

    auto attempt = [&](const char* name, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            r.errors[name] = e.what();
        }
    };

    attempt("mse", [&] { r.mse = mse(pair); });
    attempt("nse", [&] { r.nse = nse(pair); });
    attempt("kge", [&] {
        const auto [v, c] = kge_with_components(pair);
        r.kge = v;
        r.stationary = c;
        r.kge_ss = 1.0 - std::sqrt((c.M + c.V + c.C) / 2.0);
    });
    attempt("jkge_ss", [&] {
        const auto parts = detail::nonstationary_parts(pair, method, eps_b);
        const auto c = detail::components_from(parts);
        r.nonstationary = c;
        r.jkge_ss = 1.0 - std::sqrt((c.Mstar + c.Vstar + c.Cstar) / 2.0);
        attempt("jkge_aug", [&] {
            // the water-balance term over the same benchmark-valid positions
            const double m = detail::stationary_m_over(pair, parts);
            r.jkge_aug = 1.0 - std::sqrt((m + c.Mstar + c.Vstar + c.Cstar) / 2.0);
            r.jkge_abl1 = 1.0 - std::sqrt(m + c.Mstar + c.Vstar);
            r.jkge_abl2 = 1.0 - std::sqrt(m + c.Mstar);
        });
    });
    if (method.kind != BenchmarkMethod::Kind::ltm)
        attempt("jkge_musigma", [&] {
            const auto ms = jkge_musigma(pair, method, eps_b, eps_sigma);
            r.jkge_musigma = ms.value;
            r.Vstar_t = ms.Vstar_t;
            r.eps_sigma_activations = ms.eps_sigma_activations;
        });
    else
        r.errors["jkge_musigma"] = "not defined for the ltm benchmark";
    return r;
}

// ---------------------------------------------------------------------------
// Report serialization

inline const std::vector<std::string>& report_keys() {
    static const std::vector<std::string> keys = {
        "mse", "nse", "kge", "kge_ss", "jkge_ss", "jkge_aug", "jkge_abl1", "jkge_abl2", "jkge_musigma",
        "beta", "alpha", "rho", "M", "V", "C",
        "Mstar", "alpha_star", "rho_star", "Vstar", "Cstar", "psi_s", "psi_o"};
    return keys;
}

inline std::map<std::string, std::optional<double>> report_values(const MetricReport& r) {
    std::map<std::string, std::optional<double>> m;
    m["mse"] = r.mse;
    m["nse"] = r.nse;
    m["kge"] = r.kge;
    m["kge_ss"] = r.kge_ss;
    m["jkge_ss"] = r.jkge_ss;
    m["jkge_aug"] = r.jkge_aug;
    m["jkge_abl1"] = r.jkge_abl1;
    m["jkge_abl2"] = r.jkge_abl2;
    m["jkge_musigma"] = r.jkge_musigma;
    if (r.stationary) {
        m["beta"] = r.stationary->beta;
        m["alpha"] = r.stationary->alpha;
        m["rho"] = r.stationary->rho;
        m["M"] = r.stationary->M;
        m["V"] = r.stationary->V;
        m["C"] = r.stationary->C;
    }
    if (r.nonstationary) {
        m["Mstar"] = r.nonstationary->Mstar;
        m["alpha_star"] = r.nonstationary->alpha_star;
        m["rho_star"] = r.nonstationary->rho_star;
        m["Vstar"] = r.nonstationary->Vstar;
        m["Cstar"] = r.nonstationary->Cstar;
        m["psi_s"] = r.nonstationary->psi_s;
        m["psi_o"] = r.nonstationary->psi_o;
    }
    return m;
}

inline nlohmann::json report_to_json(const MetricReport& r) {
    nlohmann::json j;
    for (const auto& [k, v] : report_values(r))
        if (v) j[k] = *v;
    j["method"] = r.method.str();
    j["log_space"] = r.log_space;
    j["n_used"] = r.n_used;
    if (r.nonstationary) {
        j["eps_b_activations"] = r.nonstationary->eps_b_activations;
        j["degenerate_perfect_benchmark"] = r.nonstationary->degenerate_perfect_benchmark;
    }
    j["eps_sigma_activations"] = r.eps_sigma_activations;
    if (!r.errors.empty()) j["errors"] = r.errors;
    return j;
}

inline std::string report_csv_header() {
    std::string out;
    for (const auto& k : report_keys()) {
        if (!out.empty()) out += ',';
        out += k;
    }
    return out + ",method,log_space,n_used\n";
}

inline std::string report_csv_row(const MetricReport& r) {
    const auto vals = report_values(r);
    std::string out;
    char buf[64];
    for (const auto& k : report_keys()) {
        if (!out.empty()) out += ',';
        const auto it = vals.find(k);
        if (it != vals.end() && it->second) {
            std::snprintf(buf, sizeof buf, "%.17g", *it->second);
            out += buf;
        }
    }
    out += ',' + r.method.str();
    out += r.log_space ? ",1," : ",0,";
    out += std::to_string(r.n_used);
    return out + "\n";
}

}  // namespace jkge
