#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "jkge/errors.hpp"
#include "jkge/series.hpp"

namespace jkge {

/// Two-bucket conceptual rainfall-runoff model: a soil store with saturation
/// excess, evaporation and linear drainage, and a baseflow store fed by a
/// seepage fraction of the drainage.
struct BucketParams {
    double smax = 100.0;     // soil capacity, mm
    double ks = 0.5;         // soil outflow coefficient, 1/day
    double kb = 0.5;         // baseflow coefficient, 1/day
    double fseep = 0.5;      // fraction of drainage routed to the baseflow store
    double etc_scale = 0.5;  // ET efficiency

    static constexpr std::size_t n_params = 5;

    static const std::array<std::string, n_params>& names() {
        static const std::array<std::string, n_params> n = {"smax", "ks", "kb", "fseep", "etc_scale"};
        return n;
    }

    /// Map an unconstrained vector (optimiser space) onto the feasible box:
    /// exponential for the positive capacity, logistic for unit-interval
    /// rates and fractions. theta = 0 gives the defaults above.
    static BucketParams from_unconstrained(const std::vector<double>& theta) {
        if (theta.size() != n_params) throw ArgumentError("expected 5 unconstrained parameters");
        auto logistic = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
        BucketParams p;
        p.smax = 100.0 * std::exp(theta[0]);
        p.ks = logistic(theta[1]);
        p.kb = logistic(theta[2]);
        p.fseep = logistic(theta[3]);
        p.etc_scale = logistic(theta[4]);
        return p;
    }
};

struct BucketState {
    double soil = 0.0;  // mm
    double base = 0.0;  // mm
};

struct Forcing {
    double precip = 0.0;  // mm/day
    double pet = 0.0;     // mm/day
};

struct StepResult {
    BucketState state;
    double q = 0.0;   // streamflow, mm/day
    double et = 0.0;  // actual evapotranspiration, mm/day
};

/// One daily step. Order of operations: precipitation in, saturation excess
/// out, evaporation, drainage split between quickflow and the baseflow
/// store, then baseflow release. Mass balance closes exactly:
/// precip = d(soil) + d(base) + et + q.
inline StepResult step(BucketState state, const Forcing& f, const BucketParams& p) {
    StepResult r;
    state.soil += f.precip;
    const double qx = std::max(0.0, state.soil - p.smax);
    state.soil -= qx;
    double et = p.etc_scale * f.pet * (state.soil / p.smax);
    et = std::min(et, state.soil);
    state.soil -= et;
    const double d = p.ks * state.soil;
    state.soil -= d;
    state.base += p.fseep * d;
    const double qb = p.kb * state.base;
    state.base -= qb;
    r.q = qx + (1.0 - p.fseep) * d + qb;
    r.et = et;
    r.state = state;
    return r;
}

/// Run the model over a daily forcing record; output positions before the
/// scoring offset are masked missing so spin-up never enters a metric.
inline TimeSeries simulate(const std::vector<Forcing>& forcings, const BucketParams& params,
                           BucketState state, std::size_t scoring_offset, Date start) {
    TimeSeries q;
    q.start = start;
    q.unit = Unit::mm_per_day;
    q.values.resize(forcings.size());
    q.missing.resize(forcings.size());
    for (std::size_t t = 0; t < forcings.size(); ++t) {
        const auto r = step(state, forcings[t], params);
        state = r.state;
        q.values[t] = r.q;
        q.missing[t] = t < scoring_offset;
    }
    return q;
}

/// Zip aligned precip/pet series into the per-day forcing records the model
/// consumes; missing positions are treated as zero input.
inline std::vector<Forcing> zip_forcings(const TimeSeries& precip, const TimeSeries& pet) {
    if (precip.size() != pet.size() || precip.start != pet.start)
        throw ArgumentError("precip and pet series are not aligned");
    std::vector<Forcing> f(precip.size());
    for (std::size_t t = 0; t < f.size(); ++t) {
        f[t].precip = precip.missing[t] ? 0.0 : precip.values[t];
        f[t].pet = pet.missing[t] ? 0.0 : pet.values[t];
    }
    return f;
}

}  // namespace jkge
