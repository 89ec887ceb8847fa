#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "jkge/errors.hpp"
#include "jkge/util.hpp"

namespace jkge {

enum class Unit { cfs, mm_per_day, log_mm_per_day, dimensionless };

inline std::string unit_str(Unit u) {
    switch (u) {
        case Unit::cfs: return "cfs";
        case Unit::mm_per_day: return "mm_per_day";
        case Unit::log_mm_per_day: return "log_mm_per_day";
        case Unit::dimensionless: return "dimensionless";
    }
    return "?";
}

inline Unit parse_unit(std::string_view s) {
    if (s == "cfs") return Unit::cfs;
    if (s == "mm_per_day") return Unit::mm_per_day;
    if (s == "log_mm_per_day") return Unit::log_mm_per_day;
    if (s == "dimensionless") return Unit::dimensionless;
    throw ArgumentError("unknown unit: " + std::string(s));
}

using Date = std::chrono::sys_days;

inline Date make_date(int y, unsigned m, unsigned d) {
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw ArgumentError("invalid calendar date");
    return Date{ymd};
}

inline std::string date_str(Date d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()));
    return buf;
}

/// Parse a strict ISO-8601 calendar date (YYYY-MM-DD).
inline Date parse_date(std::string_view s) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    if (std::sscanf(std::string(s).c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3)
        throw IngestionError("unparseable date: " + std::string(s));
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw IngestionError("invalid date: " + std::string(s));
    return Date{ymd};
}

/// Daily real-valued signal. Index t corresponds to start + t days; missing
/// positions carry NaN in values and 1 in the mask.
struct TimeSeries {
    Date start{};
    std::vector<double> values;
    std::vector<std::uint8_t> missing;
    Unit unit = Unit::dimensionless;

    std::size_t size() const { return values.size(); }
    Date date_at(std::size_t t) const { return start + std::chrono::days(static_cast<long>(t)); }

    void validate() const {
        if (values.size() != missing.size())
            throw ArgumentError("values/missing length mismatch");
        for (std::size_t t = 0; t < values.size(); ++t)
            if (!missing[t] && !std::isfinite(values[t]))
                throw ArgumentError("non-finite value at non-missing index " + std::to_string(t));
    }
};

inline TimeSeries make_series(Date start, std::vector<double> values, Unit unit,
                              std::vector<std::uint8_t> missing = {}) {
    TimeSeries s;
    s.start = start;
    s.values = std::move(values);
    s.missing = missing.empty() ? std::vector<std::uint8_t>(s.values.size(), 0) : std::move(missing);
    s.unit = unit;
    s.validate();
    return s;
}

/// Aligned observed/simulated pair. A position is usable only where both
/// masks are non-missing.
struct PairedSeries {
    TimeSeries obs;
    TimeSeries sim;

    PairedSeries(TimeSeries o, TimeSeries s) : obs(std::move(o)), sim(std::move(s)) {
        if (obs.start != sim.start) throw ArgumentError("obs/sim start dates differ");
        if (obs.size() != sim.size()) throw ArgumentError("obs/sim lengths differ");
        if (obs.unit != sim.unit) throw ArgumentError("obs/sim units differ");
    }

    std::size_t size() const { return obs.size(); }
    bool usable(std::size_t t) const { return !obs.missing[t] && !sim.missing[t]; }
    std::size_t usable_count() const {
        std::size_t n = 0;
        for (std::size_t t = 0; t < size(); ++t) n += usable(t);
        return n;
    }
};

// ---------------------------------------------------------------------------
// Water-year calendar (Oct 1 of Y-1 through Sep 30 of Y).

inline int water_year_of(Date d) {
    const std::chrono::year_month_day ymd{d};
    const int y = int(ymd.year());
    return unsigned(ymd.month()) >= 10 ? y + 1 : y;
}

inline Date water_year_start(int wy) { return make_date(wy - 1, 10, 1); }
inline Date water_year_end(int wy) { return make_date(wy, 9, 30); }  // inclusive

struct WaterYearIndex {
    std::vector<int> year_of;  // per day index

    int at(std::size_t t) const { return year_of.at(t); }
};

inline WaterYearIndex water_year_index(const TimeSeries& s) {
    WaterYearIndex wy;
    wy.year_of.resize(s.size());
    for (std::size_t t = 0; t < s.size(); ++t) wy.year_of[t] = water_year_of(s.date_at(t));
    return wy;
}

struct YearRange {
    int year = 0;
    std::size_t begin = 0, end = 0;  // [begin, end) day indices
    bool complete = false;

    std::size_t length() const { return end - begin; }
};

/// Contiguous per-water-year index ranges covered by the series. A year is
/// complete when the series spans its full Oct 1 .. Sep 30 extent.
inline std::vector<YearRange> water_year_ranges(const TimeSeries& s) {
    std::vector<YearRange> out;
    if (s.size() == 0) return out;
    std::size_t t = 0;
    while (t < s.size()) {
        const int wy = water_year_of(s.date_at(t));
        YearRange r;
        r.year = wy;
        r.begin = t;
        while (t < s.size() && water_year_of(s.date_at(t)) == wy) ++t;
        r.end = t;
        r.complete = s.date_at(r.begin) == water_year_start(wy) && s.date_at(r.end - 1) == water_year_end(wy);
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ingestion

struct CsvColumns {
    std::string date = "date";
    std::string value = "value";
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline std::string strip(std::string s) {
    auto issp = [](unsigned char c) { return std::isspace(c); };
    while (!s.empty() && issp(s.front())) s.erase(s.begin());
    while (!s.empty() && issp(s.back())) s.pop_back();
    return s;
}

}  // namespace detail

/// Read a daily date/value CSV into a gap-free series over [min date, max
/// date]. Absent dates and empty value fields become missing positions.
inline TimeSeries load_daily_csv(const std::filesystem::path& path, const CsvColumns& cols, Unit unit) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw IngestionError("empty file: " + path.string());
    const auto header = detail::split_csv_line(line);
    long date_col = -1, value_col = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto h = detail::strip(header[i]);
        if (h == cols.date) date_col = static_cast<long>(i);
        if (h == cols.value) value_col = static_cast<long>(i);
    }
    if (date_col < 0 || value_col < 0)
        throw IngestionError("missing column '" + cols.date + "' or '" + cols.value + "' in " + path.string());

    std::vector<std::pair<Date, double>> rows;  // NaN = empty field
    std::set<Date> seen;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::strip(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() <= std::size_t(std::max(date_col, value_col)))
            throw IngestionError("row " + std::to_string(lineno) + ": too few columns");
        Date d{};
        try {
            d = parse_date(detail::strip(cells[std::size_t(date_col)]));
        } catch (const IngestionError& e) {
            throw IngestionError("row " + std::to_string(lineno) + ": " + e.what());
        }
        if (!seen.insert(d).second)
            throw IngestionError("row " + std::to_string(lineno) + ": duplicate date " + date_str(d));
        const std::string vs = detail::strip(cells[std::size_t(value_col)]);
        double v = std::numeric_limits<double>::quiet_NaN();
        if (!vs.empty()) {
            char* end = nullptr;
            v = std::strtod(vs.c_str(), &end);
            if (end == vs.c_str() || *end != '\0' || !std::isfinite(v))
                throw IngestionError("row " + std::to_string(lineno) + ": unparseable value '" + vs + "'");
        }
        rows.emplace_back(d, v);
    }
    if (rows.empty()) throw IngestionError("no data rows in " + path.string());

    const Date lo = *seen.begin();
    const Date hi = *seen.rbegin();
    const auto n = static_cast<std::size_t>((hi - lo).count()) + 1;
    TimeSeries s;
    s.start = lo;
    s.unit = unit;
    s.values.assign(n, std::numeric_limits<double>::quiet_NaN());
    s.missing.assign(n, 1);
    for (const auto& [d, v] : rows) {
        const auto t = static_cast<std::size_t>((d - lo).count());
        if (std::isfinite(v)) {
            s.values[t] = v;
            s.missing[t] = 0;
        }
    }
    return s;
}

inline std::string series_to_csv(const TimeSeries& s) {
    std::string out = "date,value\n";
    char buf[64];
    for (std::size_t t = 0; t < s.size(); ++t) {
        out += date_str(s.date_at(t));
        out += ',';
        if (!s.missing[t]) {
            std::snprintf(buf, sizeof buf, "%.10g", s.values[t]);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

inline void write_series_csv(const std::filesystem::path& path, const TimeSeries& s) {
    atomic_write(path, series_to_csv(s));
}

// ---------------------------------------------------------------------------
// Transformations

/// cfs -> mm/day over a catchment area:
/// 1 ft^3/s * 86400 s/day * 0.3048^3 m^3/ft^3 / (area km^2 * 1e6 m^2/km^2) * 1e3 mm/m.
inline constexpr double cfs_to_mm_per_day_over_km2 = 86400.0 * 0.3048 * 0.3048 * 0.3048 / 1000.0;

inline TimeSeries convert_discharge_to_depth(const TimeSeries& q, double area_km2) {
    if (q.unit != Unit::cfs) throw ArgumentError("convert_discharge_to_depth expects a cfs series");
    if (!(area_km2 > 0)) throw ArgumentError("catchment area must be positive");
    TimeSeries out = q;
    out.unit = Unit::mm_per_day;
    const double k = cfs_to_mm_per_day_over_km2 / area_km2;
    for (std::size_t t = 0; t < out.size(); ++t)
        if (!out.missing[t]) out.values[t] = q.values[t] * k;
    return out;
}

/// Natural log with a positive floor removing the zero-flow singularity.
inline TimeSeries log_transform(const TimeSeries& s, double floor) {
    if (!(floor > 0)) throw ArgumentError("log floor must be positive");
    TimeSeries out = s;
    out.unit = Unit::log_mm_per_day;
    for (std::size_t t = 0; t < out.size(); ++t)
        if (!out.missing[t]) out.values[t] = std::log(std::max(s.values[t], floor));
    return out;
}

// ---------------------------------------------------------------------------
// Train/eval splitting (year-stratified)

struct SplitResult {
    std::vector<int> train_years;
    std::vector<int> eval_years;
};

/// Rank complete water years by accumulated flow, then walk (wettest, driest)
/// pairs assigning them train, eval, train, ... until the eval quota
/// ceil((1-train_fraction) * pairs) is filled; every later pair trains.
/// Ties in accumulated flow resolve toward the earlier calendar year.
inline SplitResult split_train_eval(const TimeSeries& s, const WaterYearIndex& wy, double train_fraction = 0.6) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ArgumentError("train_fraction must lie in (0,1)");
    if (wy.year_of.size() != s.size()) throw ArgumentError("water-year index does not match series");

    struct YearTotal {
        int year;
        double total;
    };
    std::vector<YearTotal> totals;
    for (const auto& r : water_year_ranges(s)) {
        if (!r.complete) continue;
        double acc = 0.0;
        for (std::size_t t = r.begin; t < r.end; ++t)
            if (!s.missing[t]) acc += s.values[t];
        totals.push_back({r.year, acc});
    }
    if (totals.size() < 4) throw ArgumentError("need at least 4 complete water years");
    if (totals.size() % 2 != 0) throw ArgumentError("need an even number of complete water years");

    std::sort(totals.begin(), totals.end(), [](const YearTotal& a, const YearTotal& b) {
        if (a.total != b.total) return a.total > b.total;
        return a.year < b.year;
    });

    const std::size_t n_pairs = totals.size() / 2;
    const auto eval_quota = static_cast<std::size_t>(std::ceil((1.0 - train_fraction) * double(n_pairs)));

    SplitResult out;
    std::size_t lo = 0, hi = totals.size() - 1, eval_taken = 0;
    for (std::size_t p = 0; p < n_pairs; ++p, ++lo, --hi) {
        const bool to_eval = (p % 2 == 1) && eval_taken < eval_quota;
        auto& dst = to_eval ? out.eval_years : out.train_years;
        dst.push_back(totals[lo].year);
        dst.push_back(totals[hi].year);
        if (to_eval) ++eval_taken;
    }
    std::sort(out.train_years.begin(), out.train_years.end());
    std::sort(out.eval_years.begin(), out.eval_years.end());
    return out;
}

// ---------------------------------------------------------------------------
// Spin-up

struct SpinupResult {
    std::vector<TimeSeries> series;
    std::size_t scoring_offset = 0;  // steps excluded from all metrics
};

/// Prepend n_repeats copies of the first complete water year to every series.
inline SpinupResult spinup_prepend(const std::vector<TimeSeries>& forcings, int n_repeats) {
    if (n_repeats < 0) throw ArgumentError("n_repeats must be >= 0");
    if (forcings.empty()) throw ArgumentError("no forcing series given");

    const auto ranges = water_year_ranges(forcings.front());
    const YearRange* first = nullptr;
    for (const auto& r : ranges)
        if (r.complete) {
            first = &r;
            break;
        }
    if (!first) throw ArgumentError("series does not cover one complete water year");

    const std::size_t ylen = first->length();
    SpinupResult out;
    out.scoring_offset = std::size_t(n_repeats) * ylen;
    for (const auto& f : forcings) {
        if (f.size() != forcings.front().size() || f.start != forcings.front().start)
            throw ArgumentError("forcing series are not aligned");
        TimeSeries g;
        g.unit = f.unit;
        g.start = f.start - std::chrono::days(static_cast<long>(out.scoring_offset));
        g.values.reserve(f.size() + out.scoring_offset);
        g.missing.reserve(f.size() + out.scoring_offset);
        for (int k = 0; k < n_repeats; ++k) {
            g.values.insert(g.values.end(), f.values.begin() + long(first->begin), f.values.begin() + long(first->end));
            g.missing.insert(g.missing.end(), f.missing.begin() + long(first->begin), f.missing.begin() + long(first->end));
        }
        g.values.insert(g.values.end(), f.values.begin(), f.values.end());
        g.missing.insert(g.missing.end(), f.missing.begin(), f.missing.end());
        out.series.push_back(std::move(g));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Small helpers shared by calibration and evaluation drivers

inline TimeSeries slice(const TimeSeries& s, std::size_t begin, std::size_t end) {
    if (begin > end || end > s.size()) throw ArgumentError("slice out of range");
    TimeSeries out;
    out.start = s.start + std::chrono::days(static_cast<long>(begin));
    out.unit = s.unit;
    out.values.assign(s.values.begin() + long(begin), s.values.begin() + long(end));
    out.missing.assign(s.missing.begin() + long(begin), s.missing.begin() + long(end));
    return out;
}

/// Copy of the series with every position outside the given water years
/// flagged missing.
inline TimeSeries mask_to_years(const TimeSeries& s, const std::vector<int>& years) {
    TimeSeries out = s;
    const std::set<int> keep(years.begin(), years.end());
    for (std::size_t t = 0; t < out.size(); ++t) {
        if (!keep.count(water_year_of(out.date_at(t)))) {
            out.missing[t] = 1;
            out.values[t] = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return out;
}

}  // namespace jkge
