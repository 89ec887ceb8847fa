#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "jkge/errors.hpp"
#include "jkge/metrics.hpp"
#include "jkge/series.hpp"
#include "jkge/util.hpp"

namespace jkge {

// ---------------------------------------------------------------------------
// Flow-duration curve

struct FdcPoint {
    double exceedance = 0;
    double flow = 0;
};

/// Flows ranked descending against Weibull plotting positions i/(N+1).
inline std::vector<FdcPoint> flow_duration_curve(const TimeSeries& s) {
    std::vector<double> flows;
    for (std::size_t t = 0; t < s.size(); ++t)
        if (!s.missing[t]) flows.push_back(s.values[t]);
    if (flows.empty()) throw DegenerateInputError("flow duration curve of all-missing series");
    std::sort(flows.begin(), flows.end(), std::greater<>());
    std::vector<FdcPoint> out(flows.size());
    for (std::size_t i = 0; i < flows.size(); ++i)
        out[i] = {double(i + 1) / double(flows.size() + 1), flows[i]};
    return out;
}

// ---------------------------------------------------------------------------
// Flow groups (quintiles of the observed flow distribution)

struct FlowGroupAssignment {
    std::array<double, 4> boundaries{};  // 20/40/60/80% quantiles of obs
    std::vector<int> group_of;           // 0..4, or -1 where unusable
};

inline FlowGroupAssignment assign_flow_groups(const PairedSeries& pair) {
    std::vector<double> obs;
    for (std::size_t t = 0; t < pair.size(); ++t)
        if (pair.usable(t)) obs.push_back(pair.obs.values[t]);
    if (obs.empty()) throw DegenerateInputError("no usable positions");
    std::sort(obs.begin(), obs.end());

    FlowGroupAssignment a;
    for (int i = 0; i < 4; ++i) a.boundaries[std::size_t(i)] = quantile_sorted(obs, 0.2 * double(i + 1));
    a.group_of.assign(pair.size(), -1);
    for (std::size_t t = 0; t < pair.size(); ++t) {
        if (!pair.usable(t)) continue;
        const double v = pair.obs.values[t];
        int g = 0;
        while (g < 4 && v > a.boundaries[std::size_t(g)]) ++g;
        a.group_of[t] = g;
    }
    return a;
}

struct GroupStats {
    std::size_t count = 0;
    double min = 0, q25 = 0, median = 0, q75 = 0, max = 0;
};

/// Distribution summaries of log(sim) - log(obs) per flow group FG1..FG5.
inline std::array<GroupStats, 5> flow_group_anomalies(const PairedSeries& pair, double floor = default_log_floor) {
    if (!(floor > 0)) throw ArgumentError("log floor must be positive");
    const auto a = assign_flow_groups(pair);
    std::array<std::vector<double>, 5> groups;
    for (std::size_t t = 0; t < pair.size(); ++t) {
        if (a.group_of[t] < 0) continue;
        const double anom = std::log(std::max(pair.sim.values[t], floor)) - std::log(std::max(pair.obs.values[t], floor));
        groups[std::size_t(a.group_of[t])].push_back(anom);
    }
    std::array<GroupStats, 5> out;
    for (std::size_t g = 0; g < 5; ++g) {
        auto& v = groups[g];
        out[g].count = v.size();
        if (v.empty()) continue;  // emptied by ties: reported empty, not an error
        std::sort(v.begin(), v.end());
        out[g].min = v.front();
        out[g].q25 = quantile_sorted(v, 0.25);
        out[g].median = quantile_sorted(v, 0.5);
        out[g].q75 = quantile_sorted(v, 0.75);
        out[g].max = v.back();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Monthly percent bias

struct MonthlyBias {
    int year = 0;
    unsigned month = 0;
    double bias_percent = 0;
    double mean_obs = 0;
    bool defined = false;  // false when the month's observed total is zero
};

inline std::vector<MonthlyBias> monthly_percent_bias(const PairedSeries& pair) {
    std::map<std::pair<int, unsigned>, std::array<double, 3>> acc;  // {sum_sim, sum_obs, days}
    for (std::size_t t = 0; t < pair.size(); ++t) {
        if (!pair.usable(t)) continue;
        const std::chrono::year_month_day ymd{pair.obs.date_at(t)};
        auto& e = acc[{int(ymd.year()), unsigned(ymd.month())}];
        e[0] += pair.sim.values[t];
        e[1] += pair.obs.values[t];
        e[2] += 1.0;
    }
    std::vector<MonthlyBias> out;
    for (const auto& [ym, e] : acc) {
        MonthlyBias m;
        m.year = ym.first;
        m.month = ym.second;
        m.mean_obs = e[1] / e[2];
        if (e[1] != 0.0) {
            m.bias_percent = 100.0 * (e[0] - e[1]) / e[1];
            m.defined = true;
        }
        out.push_back(m);
    }
    return out;
}

// ---------------------------------------------------------------------------
// QQ data and moving quantiles

/// Sorted observed flows paired with sorted simulated flows at equal ranks.
inline std::vector<std::pair<double, double>> qq_data(const PairedSeries& pair) {
    std::vector<double> o, s;
    for (std::size_t t = 0; t < pair.size(); ++t)
        if (pair.usable(t)) {
            o.push_back(pair.obs.values[t]);
            s.push_back(pair.sim.values[t]);
        }
    std::sort(o.begin(), o.end());
    std::sort(s.begin(), s.end());
    std::vector<std::pair<double, double>> out(o.size());
    for (std::size_t i = 0; i < o.size(); ++i) out[i] = {o[i], s[i]};
    return out;
}

/// Centered-window empirical quantile with the moving-mean edge policy:
/// positions without a full window are missing in the output.
inline TimeSeries moving_quantiles(const TimeSeries& s, int n_w, double q) {
    if (n_w < 1 || n_w % 2 == 0) throw ArgumentError("window must be odd and positive");
    if (std::size_t(n_w) > s.size()) throw ArgumentError("window longer than series");
    if (!(q > 0.0 && q < 1.0)) throw ArgumentError("quantile must lie in (0,1)");
    const std::size_t k = std::size_t(n_w - 1) / 2;
    TimeSeries out;
    out.start = s.start;
    out.unit = s.unit;
    out.values.assign(s.size(), std::numeric_limits<double>::quiet_NaN());
    out.missing.assign(s.size(), 1);
    std::vector<double> window;
    for (std::size_t t = k; t + k < s.size(); ++t) {
        window.clear();
        for (std::size_t i = t - k; i <= t + k; ++i)
            if (!s.missing[i]) window.push_back(s.values[i]);
        if (window.empty()) continue;
        std::sort(window.begin(), window.end());
        out.values[t] = quantile_sorted(window, q);
        out.missing[t] = 0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Yearly-block bootstrap

struct BootstrapEntry {
    double median = 0, q05 = 0, q95 = 0;
    std::size_t skipped = 0;  // replicates where this entry was degenerate
};

struct BootstrapSummary {
    std::map<std::string, BootstrapEntry> entries;
    int n_samples = 0;
    std::uint64_t seed = 0;
};

namespace detail {

/// Concatenate the drawn water-year blocks of both series, in draw order.
inline PairedSeries resample_years(const PairedSeries& pair, const std::vector<YearRange>& blocks,
                                   std::span<const std::size_t> draw) {
    TimeSeries o, s;
    o.start = s.start = pair.obs.start;
    o.unit = pair.obs.unit;
    s.unit = pair.sim.unit;
    for (const std::size_t bi : draw) {
        const auto& r = blocks[bi];
        o.values.insert(o.values.end(), pair.obs.values.begin() + long(r.begin), pair.obs.values.begin() + long(r.end));
        o.missing.insert(o.missing.end(), pair.obs.missing.begin() + long(r.begin), pair.obs.missing.begin() + long(r.end));
        s.values.insert(s.values.end(), pair.sim.values.begin() + long(r.begin), pair.sim.values.begin() + long(r.end));
        s.missing.insert(s.missing.end(), pair.sim.missing.begin() + long(r.begin), pair.sim.missing.begin() + long(r.end));
    }
    return PairedSeries(std::move(o), std::move(s));
}

inline std::vector<YearRange> complete_year_blocks(const TimeSeries& s) {
    std::vector<YearRange> blocks;
    for (const auto& r : water_year_ranges(s))
        if (r.complete) blocks.push_back(r);
    return blocks;
}

}  // namespace detail

/// Metric report for one resample given explicitly drawn year blocks;
/// benchmarks are recomputed on the concatenated series with the section
/// origin reset to its first index.
inline MetricReport bootstrap_replicate(const PairedSeries& pair, BenchmarkMethod method,
                                        std::span<const std::size_t> draw, double eps_b = default_eps_b,
                                        double eps_sigma = default_eps_sigma) {
    const auto blocks = detail::complete_year_blocks(pair.obs);
    for (const auto bi : draw)
        if (bi >= blocks.size()) throw ArgumentError("block index out of range");
    return full_report(detail::resample_years(pair, blocks, draw), method, eps_b, false, default_log_floor, eps_sigma);
}

/// Resample whole water years with replacement (paired blocks, concatenated
/// in draw order), recompute the full report per replicate, and summarise
/// each entry by its median and (Q5, Q95). Deterministic given the seed.
inline BootstrapSummary bootstrap_metrics(const PairedSeries& pair, BenchmarkMethod method, int n = 1000,
                                          std::uint64_t seed = 0, double eps_b = default_eps_b,
                                          double eps_sigma = default_eps_sigma) {
    if (n < 1) throw ArgumentError("need at least one replicate");
    const auto blocks = detail::complete_year_blocks(pair.obs);
    if (blocks.size() < 2) throw ArgumentError("bootstrap needs at least 2 complete water years");

    std::map<std::string, std::vector<double>> samples;
    std::map<std::string, std::size_t> misses;
    std::vector<std::size_t> draw(blocks.size());
    for (int rep = 0; rep < n; ++rep) {
        // per-replicate stream so parallel evaluation cannot change results
        std::mt19937_64 rng(derive_seed(seed, "bootstrap-replicate", std::uint64_t(rep)));
        std::uniform_int_distribution<std::size_t> pick(0, blocks.size() - 1);
        for (auto& d : draw) d = pick(rng);
        const auto rep_report = full_report(detail::resample_years(pair, blocks, draw), method, eps_b, false,
                                            default_log_floor, eps_sigma);
        const auto values = report_values(rep_report);
        for (const auto& key : report_keys()) {
            const auto it = values.find(key);
            if (it != values.end() && it->second)
                samples[key].push_back(*it->second);
            else
                ++misses[key];
        }
    }

    BootstrapSummary out;
    out.n_samples = n;
    out.seed = seed;
    for (auto& [key, vals] : samples) {
        std::sort(vals.begin(), vals.end());
        BootstrapEntry e;
        e.median = quantile_sorted(vals, 0.5);
        e.q05 = quantile_sorted(vals, 0.05);
        e.q95 = quantile_sorted(vals, 0.95);
        e.skipped = misses.count(key) ? misses[key] : 0;
        out.entries[key] = e;
    }
    return out;
}

inline std::string bootstrap_csv(const BootstrapSummary& b) {
    std::string out = "metric,median,q05,q95,skipped\n";
    char buf[160];
    for (const auto& [key, e] : b.entries) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%zu\n", key.c_str(), e.median, e.q05, e.q95, e.skipped);
        out += buf;
    }
    return out;
}

}  // namespace jkge
