#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "jkge/errors.hpp"
#include "jkge/hydromodel.hpp"
#include "jkge/series.hpp"
#include "jkge/util.hpp"

namespace jkge {

/// Reference data-generating process: a three-store model (fast/interception,
/// soil with nonlinear drainage, groundwater) that is deliberately richer
/// than the two-bucket calibration model.
struct DgpParams {
    double fast_k = 0.5;   // fast-store release, 1/day
    double smax = 250.0;   // soil capacity, mm
    double ks = 0.04;      // soil drainage coefficient, 1/day
    double gamma = 1.5;    // drainage nonlinearity exponent
    double kb = 0.015;     // groundwater release, 1/day
    double fseep = 0.6;    // soil drainage fraction routed to groundwater
    double etc = 0.8;      // ET efficiency
};

struct SynthConfig {
    int n_years = 20;
    int start_year = 2000;  // record starts Oct 1 of this year
    double precip_base_rate = 0.35;  // mean storm arrivals per day
    double precip_seasonal_amp = 0.9;
    double precip_phase = std::numbers::pi / 2;  // peak at the turn of the year
    double storm_mu = 2.0;     // lognormal depth parameters (log-mm)
    double storm_sigma = 0.8;
    double pet_mean = 3.0;  // mm/day
    double pet_amp = 0.7;
    double pet_phase = -std::numbers::pi / 2;  // peak mid-year
    double year_wetness_sigma = 0.15;          // lognormal year-to-year wetness factor
    double obs_noise_sigma = 0.2;              // multiplicative lognormal observation noise
    DgpParams dgp;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_years < 2) throw ArgumentError("n_years must be >= 2");
        for (double v : {storm_sigma, pet_mean, dgp.smax, dgp.ks, dgp.kb, dgp.fast_k})
            if (!(v > 0)) throw ArgumentError("scale parameters must be positive");
        if (precip_base_rate < 0) throw ArgumentError("storm rate must be >= 0");
        if (obs_noise_sigma < 0 || year_wetness_sigma < 0) throw ArgumentError("noise sigmas must be >= 0");
    }
};

struct SynthCatchment {
    TimeSeries precip;
    TimeSeries pet;
    TimeSeries obs;
    TimeSeries latent;  // noise-free streamflow from the reference model
};

namespace detail {

struct DgpState {
    double fast = 0, soil = 0, ground = 0;
};

inline double dgp_step(DgpState& st, const Forcing& f, const DgpParams& p) {
    st.fast += f.precip;
    const double qf = p.fast_k * st.fast;
    st.fast -= qf;
    st.soil += qf;
    const double spill = std::max(0.0, st.soil - p.smax);
    st.soil -= spill;
    double et = p.etc * f.pet * (1.0 - std::exp(-2.0 * st.soil / p.smax));
    et = std::min(et, st.soil);
    st.soil -= et;
    const double frac = st.soil / p.smax;
    double d = p.ks * st.soil * std::pow(frac, p.gamma);
    d = std::min(d, st.soil);
    st.soil -= d;
    st.ground += p.fseep * d;
    const double qb = p.kb * st.ground;
    st.ground -= qb;
    return spill + (1.0 - p.fseep) * d + qb;
}

}  // namespace detail

/// Seeded synthetic catchment: seasonal Poisson storm arrivals with lognormal
/// depths, a sinusoidal PET cycle, and observations from the reference model
/// under multiplicative (mean-one) lognormal noise.
inline SynthCatchment generate_catchment(const SynthConfig& cfg) {
    cfg.validate();
    const Date start = make_date(cfg.start_year, 10, 1);
    const Date last = make_date(cfg.start_year + cfg.n_years, 9, 30);
    const auto n = std::size_t((last - start).count()) + 1;

    std::mt19937_64 rng(derive_seed(cfg.seed, "synth"));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::lognormal_distribution<double> storm_depth(cfg.storm_mu, cfg.storm_sigma);

    std::vector<double> wetness(std::size_t(cfg.n_years) + 1, 1.0);
    for (auto& w : wetness) w = std::exp(cfg.year_wetness_sigma * normal(rng));

    std::vector<double> precip(n, 0.0), pet(n, 0.0);
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t t = 0; t < n; ++t) {
        const Date d = start + std::chrono::days(static_cast<long>(t));
        const std::chrono::year_month_day ymd{d};
        const double doy = double((d - make_date(int(ymd.year()), 1, 1)).count());
        const double season = std::sin(two_pi * doy / 365.25 + cfg.precip_phase);
        const std::size_t wy_idx = std::size_t(water_year_of(d) - (cfg.start_year + 1));
        const double rate = cfg.precip_base_rate * std::max(0.0, 1.0 + cfg.precip_seasonal_amp * season) *
                            wetness[std::min(wy_idx, wetness.size() - 1)];
        std::poisson_distribution<int> storms(rate);
        const int k = storms(rng);
        for (int i = 0; i < k; ++i) precip[t] += storm_depth(rng);
        pet[t] = std::max(0.0, cfg.pet_mean * (1.0 + cfg.pet_amp * std::sin(two_pi * doy / 365.25 + cfg.pet_phase)));
    }

    std::vector<Forcing> f(n);
    for (std::size_t t = 0; t < n; ++t) f[t] = {precip[t], pet[t]};

    // settle the reference stores by running the first water year twice
    detail::DgpState st;
    const std::size_t warm = std::min(n, std::size_t((make_date(cfg.start_year + 1, 9, 30) - start).count()) + 1);
    for (int cycle = 0; cycle < 2; ++cycle)
        for (std::size_t t = 0; t < warm; ++t) detail::dgp_step(st, f[t], cfg.dgp);

    std::vector<double> latent(n, 0.0), obs(n, 0.0);
    const double noise_bias = -0.5 * cfg.obs_noise_sigma * cfg.obs_noise_sigma;  // mean-one noise
    for (std::size_t t = 0; t < n; ++t) {
        latent[t] = detail::dgp_step(st, f[t], cfg.dgp);
        obs[t] = latent[t] * std::exp(cfg.obs_noise_sigma * normal(rng) + noise_bias);
    }

    SynthCatchment out;
    out.precip = make_series(start, std::move(precip), Unit::mm_per_day);
    out.pet = make_series(start, std::move(pet), Unit::mm_per_day);
    out.obs = make_series(start, std::move(obs), Unit::mm_per_day);
    out.latent = make_series(start, std::move(latent), Unit::mm_per_day);
    return out;
}

// ---------------------------------------------------------------------------
// Plain-text key = value configuration

inline SynthConfig load_synth_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open: " + path.string());
    SynthConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::strip(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw IngestionError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::strip(line.substr(0, eq));
        const std::string val = detail::strip(line.substr(eq + 1));
        try {
            if (key == "n_years") cfg.n_years = std::stoi(val);
            else if (key == "start_year") cfg.start_year = std::stoi(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "precip_base_rate") cfg.precip_base_rate = std::stod(val);
            else if (key == "precip_seasonal_amp") cfg.precip_seasonal_amp = std::stod(val);
            else if (key == "precip_phase") cfg.precip_phase = std::stod(val);
            else if (key == "storm_mu") cfg.storm_mu = std::stod(val);
            else if (key == "storm_sigma") cfg.storm_sigma = std::stod(val);
            else if (key == "pet_mean") cfg.pet_mean = std::stod(val);
            else if (key == "pet_amp") cfg.pet_amp = std::stod(val);
            else if (key == "pet_phase") cfg.pet_phase = std::stod(val);
            else if (key == "year_wetness_sigma") cfg.year_wetness_sigma = std::stod(val);
            else if (key == "obs_noise_sigma") cfg.obs_noise_sigma = std::stod(val);
            else if (key == "dgp_fast_k") cfg.dgp.fast_k = std::stod(val);
            else if (key == "dgp_smax") cfg.dgp.smax = std::stod(val);
            else if (key == "dgp_ks") cfg.dgp.ks = std::stod(val);
            else if (key == "dgp_gamma") cfg.dgp.gamma = std::stod(val);
            else if (key == "dgp_kb") cfg.dgp.kb = std::stod(val);
            else if (key == "dgp_fseep") cfg.dgp.fseep = std::stod(val);
            else if (key == "dgp_etc") cfg.dgp.etc = std::stod(val);
            else throw IngestionError("unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw IngestionError("line " + std::to_string(lineno) + ": bad value for '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

}  // namespace jkge
