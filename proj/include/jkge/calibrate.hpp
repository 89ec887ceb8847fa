#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "jkge/errors.hpp"
#include "jkge/hydromodel.hpp"
#include "jkge/metrics.hpp"
#include "jkge/util.hpp"

namespace jkge {

struct AdamConfig {
    double lr = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 1500;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(lr > 0)) throw ArgumentError("learning rate must be positive");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw ArgumentError("beta1/beta2 must lie in [0,1)");
        if (epochs < 1) throw ArgumentError("epochs must be >= 1");
    }
};

struct LossValue {
    double value = 0;
    std::vector<double> grad;
};

using LossFn = std::function<LossValue(const std::vector<double>&)>;

struct CalibrationResult {
    std::vector<double> best_params;  // unconstrained
    std::vector<double> loss_trace;   // one entry per epoch
    std::uint64_t seed = 0;
    double best_loss = 0;
    int best_epoch = 0;
    double train_metric = 0;
    double eval_metric = 0;
};

/// Full-batch Adam with bias correction; keeps the best-so-far parameters
/// rather than the final iterate.
inline CalibrationResult adam_optimize(const LossFn& loss, std::vector<double> x, const AdamConfig& cfg) {
    cfg.validate();
    CalibrationResult res;
    res.seed = cfg.seed;
    res.loss_trace.reserve(std::size_t(cfg.epochs));
    res.best_loss = std::numeric_limits<double>::infinity();

    std::vector<double> m(x.size(), 0.0), v(x.size(), 0.0);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const LossValue lv = loss(x);
        if (!std::isfinite(lv.value))
            throw CalibrationError("non-finite loss at epoch " + std::to_string(epoch), res.loss_trace);
        res.loss_trace.push_back(lv.value);
        if (lv.value < res.best_loss) {
            res.best_loss = lv.value;
            res.best_params = x;
            res.best_epoch = epoch;
        }
        if (lv.grad.size() != x.size())
            throw CalibrationError("gradient size mismatch", res.loss_trace);
        for (double g : lv.grad)
            if (!std::isfinite(g)) throw CalibrationError("non-finite gradient at epoch " + std::to_string(epoch), res.loss_trace);

        const double bc1 = 1.0 - std::pow(cfg.beta1, epoch);
        const double bc2 = 1.0 - std::pow(cfg.beta2, epoch);
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * lv.grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * lv.grad[i] * lv.grad[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            x[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Metric-driven loss for the bucket model

struct CalibrationSetup {
    std::vector<Forcing> forcings;  // spin-up included
    Date forcing_start{};
    std::size_t scoring_offset = 0;
    TimeSeries obs;  // scored record, aligned with forcing_start + scoring_offset
    MetricId metric = MetricId::kge_ss;
    BenchmarkMethod method;
    double eps_b = default_eps_b;
    double eps_sigma = default_eps_sigma;
    std::vector<int> train_years;
    std::vector<int> eval_years;
    double fd_step = 1e-4;  // parameter-space central-difference step
    BucketState init_state{};

    void validate() const {
        if (forcings.size() < scoring_offset) throw ArgumentError("scoring offset exceeds forcing length");
        if (obs.size() != forcings.size() - scoring_offset)
            throw ArgumentError("observed record does not match the scored forcing window");
        if (obs.start != forcing_start + std::chrono::days(static_cast<long>(scoring_offset)))
            throw ArgumentError("observed record does not start at the scoring offset");
    }
};

namespace detail {

inline double metric_at(const CalibrationSetup& s, const std::vector<double>& theta, const std::vector<int>& years) {
    const auto params = BucketParams::from_unconstrained(theta);
    const auto sim_full = simulate(s.forcings, params, s.init_state, s.scoring_offset, s.forcing_start);
    auto sim = slice(sim_full, s.scoring_offset, sim_full.size());
    sim.unit = s.obs.unit;
    const PairedSeries pair(years.empty() ? s.obs : mask_to_years(s.obs, years), std::move(sim));
    return eval_metric(s.metric, pair, s.method, s.eps_b, s.eps_sigma);
}

inline double loss_from_metric(MetricId metric, double value) {
    // mse is already a loss; every other metric is an efficiency maximised at 1
    return metric == MetricId::mse ? value : 1.0 - value;
}

}  // namespace detail

/// Loss over the training subset with its parameter gradient by central
/// finite differences (the parameter vector is small; the analytic
/// metric-in-sim gradients are verified separately and reserved for future
/// adjoint use).
inline LossFn metric_loss(const CalibrationSetup& setup) {
    setup.validate();
    return [&setup](const std::vector<double>& theta) {
        LossValue lv;
        lv.value = detail::loss_from_metric(setup.metric, detail::metric_at(setup, theta, setup.train_years));
        lv.grad.resize(theta.size());
        std::vector<double> probe = theta;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double h = setup.fd_step;
            probe[i] = theta[i] + h;
            const double lp = detail::loss_from_metric(setup.metric, detail::metric_at(setup, probe, setup.train_years));
            probe[i] = theta[i] - h;
            const double lm = detail::loss_from_metric(setup.metric, detail::metric_at(setup, probe, setup.train_years));
            probe[i] = theta[i];
            lv.grad[i] = (lp - lm) / (2.0 * h);
        }
        return lv;
    };
}

/// Train metric value at given unconstrained parameters (years = train subset
/// of the setup; empty year list means the whole scored record).
inline double calibration_metric(const CalibrationSetup& setup, const std::vector<double>& theta,
                                 const std::vector<int>& years) {
    return detail::metric_at(setup, theta, years);
}

/// Run Adam from n_seeds standard-normal initialisations and keep the seed
/// with the best average of train- and eval-subset losses.
inline CalibrationResult multi_seed_calibrate(const CalibrationSetup& setup, int n_seeds, AdamConfig cfg) {
    if (n_seeds < 1) throw ArgumentError("need at least one seed");
    setup.validate();
    const LossFn loss = metric_loss(setup);

    CalibrationResult best;
    bool have_best = false;
    double best_avg = std::numeric_limits<double>::infinity();
    std::vector<std::string> failures;

    for (int s = 0; s < n_seeds; ++s) {
        std::mt19937_64 rng(derive_seed(cfg.seed, "calibrate-init", std::uint64_t(s)));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> theta0(BucketParams::n_params);
        for (auto& th : theta0) th = normal(rng);

        try {
            AdamConfig per_seed = cfg;
            per_seed.seed = std::uint64_t(s);
            CalibrationResult r = adam_optimize(loss, theta0, per_seed);
            r.train_metric = detail::metric_at(setup, r.best_params, setup.train_years);
            r.eval_metric = detail::metric_at(setup, r.best_params, setup.eval_years);
            const double avg = (detail::loss_from_metric(setup.metric, r.train_metric) +
                                detail::loss_from_metric(setup.metric, r.eval_metric)) /
                               2.0;
            if (avg < best_avg) {
                best_avg = avg;
                best = std::move(r);
                have_best = true;
            }
        } catch (const CalibrationError& e) {
            failures.push_back("seed " + std::to_string(s) + ": " + e.what());
        } catch (const DegenerateInputError& e) {
            failures.push_back("seed " + std::to_string(s) + ": " + e.what());
        }
    }
    if (!have_best) {
        std::string what = "all seeds aborted";
        for (const auto& f : failures) what += "; " + f;
        throw CalibrationError(what, {});
    }
    return best;
}

inline nlohmann::json calibration_to_json(const CalibrationResult& r, const CalibrationSetup& setup) {
    nlohmann::json j;
    j["seed"] = r.seed;
    j["best_epoch"] = r.best_epoch;
    j["best_loss"] = r.best_loss;
    j["train_metric"] = r.train_metric;
    j["eval_metric"] = r.eval_metric;
    j["metric"] = metric_str(setup.metric);
    j["method"] = setup.method.str();
    j["loss_trace"] = r.loss_trace;
    nlohmann::json params;
    const auto p = BucketParams::from_unconstrained(r.best_params);
    for (std::size_t i = 0; i < BucketParams::n_params; ++i)
        params[BucketParams::names()[i]] = r.best_params[i];
    j["params_unconstrained"] = params;
    j["params"] = {{"smax", p.smax}, {"ks", p.ks}, {"kb", p.kb}, {"fseep", p.fseep}, {"etc_scale", p.etc_scale}};
    return j;
}

/// Parameter files carry unconstrained values keyed by name.
inline std::vector<double> params_from_json(const nlohmann::json& j) {
    std::vector<double> theta(BucketParams::n_params);
    for (std::size_t i = 0; i < BucketParams::n_params; ++i) {
        const auto& name = BucketParams::names()[i];
        if (!j.contains(name)) throw IngestionError("parameter file missing '" + name + "'");
        theta[i] = j.at(name).get<double>();
    }
    return theta;
}

}  // namespace jkge
