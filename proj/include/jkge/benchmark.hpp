#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "jkge/errors.hpp"
#include "jkge/series.hpp"

namespace jkge {

/// How the time-varying benchmark b_t is extracted from a series: its
/// long-term mean, piecewise-constant means over consecutive sections of
/// length N_s, or a centered moving mean over an odd window of length N_w.
struct BenchmarkMethod {
    enum class Kind { ltm, section_mean, moving_mean };

    Kind kind = Kind::ltm;
    int length = 0;  // N_s or N_w; unused for ltm

    static BenchmarkMethod ltm() { return {Kind::ltm, 0}; }

    static BenchmarkMethod section(int n_s) {
        if (n_s < 1) throw ArgumentError("section length must be >= 1");
        return {Kind::section_mean, n_s};
    }

    static BenchmarkMethod moving(int n_w) {
        if (n_w < 1) throw ArgumentError("window length must be >= 1");
        if (n_w % 2 == 0) throw ArgumentError("moving-mean window must be odd (centered window)");
        return {Kind::moving_mean, n_w};
    }

    /// "ltm" | "sa:N" | "ma:N" (ma requires odd N).
    static BenchmarkMethod parse(std::string_view s) {
        if (s == "ltm") return ltm();
        const auto colon = s.find(':');
        if (colon != std::string_view::npos) {
            const auto head = s.substr(0, colon);
            const auto tail = std::string(s.substr(colon + 1));
            try {
                const int n = std::stoi(tail);
                if (std::to_string(n) == tail) {
                    if (head == "sa") return section(n);
                    if (head == "ma") return moving(n);
                }
            } catch (const std::exception&) {
            }
        }
        throw ArgumentError("bad benchmark method '" + std::string(s) + "': expected ltm, sa:N, or ma:N (N odd for ma)");
    }

    std::string str() const {
        switch (kind) {
            case Kind::ltm: return "ltm";
            case Kind::section_mean: return "sa:" + std::to_string(length);
            case Kind::moving_mean: return "ma:" + std::to_string(length);
        }
        return "?";
    }

    bool operator==(const BenchmarkMethod&) const = default;
};

/// Benchmark values aligned with the source series; positions where no
/// benchmark is defined (moving-mean edges, all-missing segments) are
/// flagged invalid and excluded from every downstream metric.
struct BenchmarkSeries {
    std::vector<double> values;
    std::vector<std::uint8_t> valid;
    BenchmarkMethod method;
};

/// Per-position anomaly standard deviation, broadcast from segments.
struct SigmaSeries {
    std::vector<double> values;
    std::vector<std::uint8_t> valid;
    BenchmarkMethod method;
};

namespace detail {

constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();

/// Mean of the non-missing values in [lo, hi); exact (no rounding) when the
/// segment is constant, so a piecewise-constant series reproduces itself and
/// its anomalies are identically zero rather than ulp-sized noise.
inline double segment_mean(std::span<const double> v, std::span<const std::uint8_t> miss, std::size_t lo,
                           std::size_t hi, std::size_t& cnt_out) {
    KahanSum sum;
    double first = 0.0;
    std::size_t cnt = 0;
    bool constant = true;
    for (std::size_t t = lo; t < hi; ++t) {
        if (miss[t]) continue;
        if (cnt == 0)
            first = v[t];
        else if (v[t] != first)
            constant = false;
        sum.add(v[t]);
        ++cnt;
    }
    cnt_out = cnt;
    if (cnt == 0) return nan_v;
    return constant ? first : sum.value() / double(cnt);
}

inline void ltm_into(std::span<const double> v, std::span<const std::uint8_t> miss,
                     std::span<double> b, std::span<std::uint8_t> valid) {
    std::size_t n = 0;
    const double m = segment_mean(v, miss, 0, v.size(), n);
    if (n == 0) throw DegenerateInputError("long-term mean of all-missing series");
    for (std::size_t t = 0; t < v.size(); ++t) {
        b[t] = m;
        valid[t] = 1;
    }
}

inline void section_mean_into(std::span<const double> v, std::span<const std::uint8_t> miss, int n_s,
                              std::span<double> b, std::span<std::uint8_t> valid) {
    const std::size_t n = v.size();
    for (std::size_t lo = 0; lo < n; lo += std::size_t(n_s)) {
        const std::size_t hi = std::min(lo + std::size_t(n_s), n);
        std::size_t cnt = 0;
        const double m = segment_mean(v, miss, lo, hi, cnt);
        for (std::size_t t = lo; t < hi; ++t) {
            b[t] = m;
            valid[t] = cnt > 0;
        }
    }
}

inline void moving_mean_into(std::span<const double> v, std::span<const std::uint8_t> miss, int n_w,
                             std::span<double> b, std::span<std::uint8_t> valid) {
    const std::size_t n = v.size();
    const std::size_t k = std::size_t(n_w - 1) / 2;
    {
        // gap-free constant input: emit the value itself, not a rounded running mean
        std::size_t cnt = 0;
        const double m = segment_mean(v, miss, 0, n, cnt);
        bool constant = cnt == n && n > 0;
        for (std::size_t t = 0; t < n && constant; ++t)
            if (v[t] != m) constant = false;
        if (constant) {
            for (std::size_t t = 0; t < n; ++t) {
                const bool full = t >= k && t + k < n;
                b[t] = full ? m : nan_v;
                valid[t] = full;
            }
            return;
        }
    }
    // running sum over window [t-k, t+k], primed with [0, k-1]
    double sum = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < std::min(k, n); ++i)
        if (!miss[i]) {
            sum += v[i];
            ++cnt;
        }
    for (std::size_t t = 0; t < n; ++t) {
        if (t + k < n && !miss[t + k]) {
            sum += v[t + k];
            ++cnt;
        }
        const bool full_window = t >= k && t + k < n;
        if (full_window && cnt > 0) {
            b[t] = sum / double(cnt);
            valid[t] = 1;
        } else {
            b[t] = nan_v;
            valid[t] = 0;
        }
        if (t >= k && !miss[t - k]) {
            sum -= v[t - k];
            --cnt;
        }
    }
}

inline void benchmark_into(std::span<const double> v, std::span<const std::uint8_t> miss,
                           BenchmarkMethod method, std::span<double> b, std::span<std::uint8_t> valid) {
    switch (method.kind) {
        case BenchmarkMethod::Kind::ltm: ltm_into(v, miss, b, valid); return;
        case BenchmarkMethod::Kind::section_mean: section_mean_into(v, miss, method.length, b, valid); return;
        case BenchmarkMethod::Kind::moving_mean:
            if (std::size_t(method.length) > v.size())
                throw ArgumentError("moving-mean window longer than series");
            moving_mean_into(v, miss, method.length, b, valid);
            return;
    }
}

}  // namespace detail

inline BenchmarkSeries ltm_benchmark(const TimeSeries& s) {
    BenchmarkSeries b;
    b.method = BenchmarkMethod::ltm();
    b.values.resize(s.size());
    b.valid.resize(s.size());
    detail::ltm_into(s.values, s.missing, b.values, b.valid);
    return b;
}

/// Piecewise-constant means over consecutive non-overlapping sections of
/// length n_s anchored at index 0; a final partial section gets its own mean.
inline BenchmarkSeries section_mean(const TimeSeries& s, int n_s) {
    BenchmarkSeries b;
    b.method = BenchmarkMethod::section(n_s);
    b.values.resize(s.size());
    b.valid.resize(s.size());
    detail::section_mean_into(s.values, s.missing, n_s, b.values, b.valid);
    return b;
}

/// Centered moving mean over an odd window; the first and last (n_w-1)/2
/// positions have no full window and are invalid.
inline BenchmarkSeries moving_mean(const TimeSeries& s, int n_w) {
    const auto method = BenchmarkMethod::moving(n_w);  // validates oddness
    if (std::size_t(n_w) > s.size()) throw ArgumentError("moving-mean window longer than series");
    BenchmarkSeries b;
    b.method = method;
    b.values.resize(s.size());
    b.valid.resize(s.size());
    detail::moving_mean_into(s.values, s.missing, n_w, b.values, b.valid);
    return b;
}

inline BenchmarkSeries build_benchmark(const TimeSeries& s, BenchmarkMethod method) {
    switch (method.kind) {
        case BenchmarkMethod::Kind::ltm: return ltm_benchmark(s);
        case BenchmarkMethod::Kind::section_mean: return section_mean(s, method.length);
        case BenchmarkMethod::Kind::moving_mean: return moving_mean(s, method.length);
    }
    throw ArgumentError("unknown benchmark method");
}

/// Segment-wise root-mean-square anomaly around the benchmark, broadcast to
/// every position of the segment (sections) or computed per window (moving).
inline SigmaSeries segment_sigma(const TimeSeries& s, const BenchmarkSeries& b) {
    if (b.values.size() != s.size()) throw ArgumentError("benchmark does not match series");
    SigmaSeries out;
    out.method = b.method;
    out.values.assign(s.size(), detail::nan_v);
    out.valid.assign(s.size(), 0);

    if (b.method.kind == BenchmarkMethod::Kind::section_mean) {
        const auto n_s = std::size_t(b.method.length);
        for (std::size_t lo = 0; lo < s.size(); lo += n_s) {
            const std::size_t hi = std::min(lo + n_s, s.size());
            if (!b.valid[lo]) continue;
            double acc = 0.0;
            std::size_t cnt = 0;
            for (std::size_t t = lo; t < hi; ++t)
                if (!s.missing[t]) {
                    const double a = s.values[t] - b.values[t];
                    acc += a * a;
                    ++cnt;
                }
            const double sig = cnt > 0 ? std::sqrt(acc / double(cnt)) : detail::nan_v;
            for (std::size_t t = lo; t < hi; ++t) {
                out.values[t] = sig;
                out.valid[t] = cnt > 0;
            }
        }
        return out;
    }

    if (b.method.kind == BenchmarkMethod::Kind::moving_mean) {
        const std::size_t k = std::size_t(b.method.length - 1) / 2;
        for (std::size_t t = 0; t < s.size(); ++t) {
            if (!b.valid[t]) continue;
            double acc = 0.0;
            std::size_t cnt = 0;
            for (std::size_t i = t - k; i <= t + k; ++i)
                if (!s.missing[i]) {
                    const double a = s.values[i] - b.values[t];
                    acc += a * a;
                    ++cnt;
                }
            if (cnt > 0) {
                out.values[t] = std::sqrt(acc / double(cnt));
                out.valid[t] = 1;
            }
        }
        return out;
    }

    throw ArgumentError("segment_sigma requires a section-mean or moving-mean benchmark");
}

/// Standardized log anomalies Z_t = (ln o_t - ln b_t) / Psi over positions
/// valid in the benchmark, with Psi the root-mean-square log anomaly, so
/// that RMS(Z) = 1 exactly.
inline TimeSeries standardized_log_anomalies(const TimeSeries& o, const BenchmarkSeries& b, double floor) {
    if (b.values.size() != o.size()) throw ArgumentError("benchmark does not match series");
    if (!(floor > 0)) throw ArgumentError("log floor must be positive");

    std::vector<double> la(o.size(), detail::nan_v);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < o.size(); ++t) {
        if (o.missing[t] || !b.valid[t]) continue;
        la[t] = std::log(std::max(o.values[t], floor)) - std::log(std::max(b.values[t], floor));
        acc += la[t] * la[t];
        ++n;
    }
    if (n == 0) throw DegenerateInputError("no valid positions for log anomalies");
    const double psi = std::sqrt(acc / double(n));
    if (psi == 0.0) throw DegenerateInputError("log anomalies identically zero (observed equals benchmark)");

    TimeSeries z;
    z.start = o.start;
    z.unit = Unit::dimensionless;
    z.values.assign(o.size(), detail::nan_v);
    z.missing.assign(o.size(), 1);
    for (std::size_t t = 0; t < o.size(); ++t)
        if (std::isfinite(la[t])) {
            z.values[t] = la[t] / psi;
            z.missing[t] = 0;
        }
    return z;
}

}  // namespace jkge
