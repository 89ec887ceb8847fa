#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "jkge/benchmark.hpp"
#include "jkge/calibrate.hpp"
#include "jkge/errors.hpp"
#include "jkge/evaluate.hpp"
#include "jkge/gradients.hpp"
#include "jkge/hydromodel.hpp"
#include "jkge/metrics.hpp"
#include "jkge/series.hpp"
#include "jkge/synth.hpp"
#include "jkge/util.hpp"

namespace jkge::cli {

namespace fs = std::filesystem;

namespace detail {

inline PairedSeries load_pair(const fs::path& obs_path, const fs::path& sim_path) {
    auto obs = load_daily_csv(obs_path, {}, Unit::mm_per_day);
    auto sim = load_daily_csv(sim_path, {}, Unit::mm_per_day);
    return PairedSeries(std::move(obs), std::move(sim));
}

inline std::string fdc_csv(const PairedSeries& pair) {
    const auto obs = flow_duration_curve(pair.obs);
    const auto sim = flow_duration_curve(pair.sim);
    std::string out = "exceedance,obs,sim\n";
    char buf[120];
    for (std::size_t i = 0; i < obs.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g\n", obs[i].exceedance, obs[i].flow, sim[i].flow);
        out += buf;
    }
    return out;
}

inline std::string flowgroups_csv(const PairedSeries& pair, double floor) {
    const auto stats = flow_group_anomalies(pair, floor);
    std::string out = "group,count,min,q25,median,q75,max\n";
    char buf[200];
    for (std::size_t g = 0; g < 5; ++g) {
        if (stats[g].count == 0) {
            std::snprintf(buf, sizeof buf, "FG%zu,0,,,,,\n", g + 1);
        } else {
            std::snprintf(buf, sizeof buf, "FG%zu,%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", g + 1, stats[g].count,
                          stats[g].min, stats[g].q25, stats[g].median, stats[g].q75, stats[g].max);
        }
        out += buf;
    }
    return out;
}

inline std::string monthly_bias_csv(const PairedSeries& pair) {
    std::string out = "year,month,bias_percent,mean_obs\n";
    char buf[120];
    for (const auto& m : monthly_percent_bias(pair)) {
        if (m.defined)
            std::snprintf(buf, sizeof buf, "%d,%02u,%.10g,%.10g\n", m.year, m.month, m.bias_percent, m.mean_obs);
        else
            std::snprintf(buf, sizeof buf, "%d,%02u,,%.10g\n", m.year, m.month, m.mean_obs);
        out += buf;
    }
    return out;
}

inline std::string qq_csv(const PairedSeries& pair) {
    std::string out = "obs,sim\n";
    char buf[80];
    for (const auto& [o, s] : qq_data(pair)) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", o, s);
        out += buf;
    }
    return out;
}

inline std::string benchmark_csv(const TimeSeries& s, const BenchmarkSeries& b) {
    std::string out = "date,value,benchmark,valid\n";
    char buf[120];
    for (std::size_t t = 0; t < s.size(); ++t) {
        out += date_str(s.date_at(t));
        out += ',';
        if (!s.missing[t]) {
            std::snprintf(buf, sizeof buf, "%.10g", s.values[t]);
            out += buf;
        }
        out += ',';
        if (b.valid[t]) {
            std::snprintf(buf, sizeof buf, "%.10g", b.values[t]);
            out += buf;
        }
        out += b.valid[t] ? ",1\n" : ",0\n";
    }
    return out;
}

inline std::string forcings_csv(const TimeSeries& precip, const TimeSeries& pet) {
    std::string out = "date,precip,pet\n";
    char buf[120];
    for (std::size_t t = 0; t < precip.size(); ++t) {
        std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g\n", date_str(precip.date_at(t)).c_str(), precip.values[t],
                      pet.values[t]);
        out += buf;
    }
    return out;
}

struct CalibArgs {
    std::string forcings_path, obs_path, out_dir;
    std::string metric = "kge_ss";
    std::string method = "ltm";
    int epochs = 1500;
    double lr = 0.1;
    int seeds = 10;
    double train_fraction = 0.6;
    int spinup_repeats = 3;
    std::uint64_t seed = 0;
    double eps_b = default_eps_b;
    double eps_sigma = default_eps_sigma;
    double fd_step = 1e-4;
};

/// Assemble setup (spin-up, water-year split) shared by calibrate/experiment.
inline CalibrationSetup make_setup(const CalibArgs& a, MetricId metric, BenchmarkMethod method) {
    auto precip = load_daily_csv(a.forcings_path, {"date", "precip"}, Unit::mm_per_day);
    auto pet = load_daily_csv(a.forcings_path, {"date", "pet"}, Unit::mm_per_day);
    auto obs = load_daily_csv(a.obs_path, {}, Unit::mm_per_day);
    if (obs.size() != precip.size() || obs.start != precip.start)
        throw ArgumentError("observed record and forcings must cover the same dates");

    const auto wy = water_year_index(obs);
    const auto split = split_train_eval(obs, wy, a.train_fraction);
    const auto spin = spinup_prepend({precip, pet}, a.spinup_repeats);

    CalibrationSetup setup;
    setup.forcings = zip_forcings(spin.series[0], spin.series[1]);
    setup.forcing_start = spin.series[0].start;
    setup.scoring_offset = spin.scoring_offset;
    setup.obs = std::move(obs);
    setup.metric = metric;
    setup.method = method;
    setup.eps_b = a.eps_b;
    setup.eps_sigma = a.eps_sigma;
    setup.train_years = split.train_years;
    setup.eval_years = split.eval_years;
    setup.fd_step = a.fd_step;
    return setup;
}

inline int run_grad_check(std::uint64_t seed, int instances) {
    std::mt19937_64 rng(derive_seed(seed, "grad-check"));
    std::uniform_real_distribution<double> value(0.1, 10.0);

    const std::vector<BenchmarkMethod> methods = {
        BenchmarkMethod::ltm(),        BenchmarkMethod::section(7),  BenchmarkMethod::section(30),
        BenchmarkMethod::section(90),  BenchmarkMethod::moving(7),   BenchmarkMethod::moving(31),
        BenchmarkMethod::moving(91)};
    const std::vector<MetricId> metrics = {MetricId::mse, MetricId::nse, MetricId::kge_ss, MetricId::jkge_ss,
                                           MetricId::jkge_aug};

    bool all_ok = true;
    std::printf("%-10s %-8s %-12s %s\n", "metric", "method", "max_rel_err", "status");
    for (const auto metric : metrics) {
        for (const auto& method : methods) {
            const std::size_t min_len =
                method.kind == BenchmarkMethod::Kind::moving_mean ? std::size_t(method.length) + 9 : 30;
            std::uniform_int_distribution<std::size_t> length(min_len, 365);
            double worst = 0.0;
            for (int i = 0; i < instances; ++i) {
                // redraw instances with a near-zero gradient coordinate, where
                // the central difference only measures its own roundoff
                for (;;) {
                    const std::size_t n = length(rng);
                    std::vector<double> o(n), s(n);
                    for (std::size_t t = 0; t < n; ++t) {
                        o[t] = value(rng);
                        s[t] = value(rng);
                    }
                    const PairedSeries pair(make_series(make_date(2000, 10, 1), std::move(o), Unit::mm_per_day),
                                            make_series(make_date(2000, 10, 1), std::move(s), Unit::mm_per_day));
                    const auto g = grad_metric(metric, pair, method);
                    double gmin = std::numeric_limits<double>::infinity();
                    for (std::size_t t = 0; t < n; ++t)
                        if (g.usable[t]) gmin = std::min(gmin, std::abs(g.values[t]));
                    if (gmin < 3e-6) continue;
                    worst = std::max(worst, fd_check(metric, pair, method, 1e-4));
                    break;
                }
            }
            const bool ok = worst <= 1e-6;
            all_ok = all_ok && ok;
            std::printf("%-10s %-8s %-12.3e %s\n", metric_str(metric).c_str(), method.str().c_str(), worst,
                        ok ? "pass" : "FAIL");
            if (metric == MetricId::mse || metric == MetricId::nse || metric == MetricId::kge_ss)
                break;  // benchmark-free metrics need only one row
        }
    }
    return all_ok ? 0 : 2;
}

inline void write_evaluation(const fs::path& dir, const PairedSeries& pair, BenchmarkMethod method, double eps_b,
                             double eps_sigma, bool log_space, double floor, int bootstrap_n, std::uint64_t seed) {
    fs::create_directories(dir);
    const auto report = full_report(pair, method, eps_b, log_space, floor, eps_sigma);
    atomic_write(dir / "report.json", report_to_json(report).dump(2) + "\n");
    atomic_write(dir / "fdc.csv", fdc_csv(pair));
    atomic_write(dir / "flowgroups.csv", flowgroups_csv(pair, floor));
    atomic_write(dir / "monthly_bias.csv", monthly_bias_csv(pair));
    atomic_write(dir / "qq.csv", qq_csv(pair));
    if (bootstrap_n > 0) {
        const auto boot = bootstrap_metrics(pair, method, bootstrap_n, seed, eps_b, eps_sigma);
        atomic_write(dir / "bootstrap.csv", bootstrap_csv(boot));
    }
}

}  // namespace detail

inline int run(int argc, const char* const* argv) {
    CLI::App app{"non-stationary efficiency metrics for daily time-series models"};
    app.require_subcommand(1);

    // --- convert ---
    std::string in_path, out_path;
    double area_km2 = 0.0;
    auto* convert = app.add_subcommand("convert", "convert cfs discharge to mm/day over a catchment area");
    convert->add_option("--in", in_path, "input CSV (date,value in cfs)")->required();
    convert->add_option("--out", out_path, "output CSV (mm/day)")->required();
    convert->add_option("--area-km2", area_km2, "catchment area in km^2")->required();

    // --- benchmark ---
    std::string bench_method = "sa:30";
    auto* benchmark = app.add_subcommand("benchmark", "emit a benchmark series for a daily record");
    benchmark->add_option("--in", in_path, "input CSV (date,value)")->required();
    benchmark->add_option("--out", out_path, "output CSV (date,value,benchmark,valid)")->required();
    benchmark->add_option("--method", bench_method, "ltm | sa:N | ma:N (N odd for ma)");

    // --- evaluate ---
    std::string obs_path, sim_path, out_dir = ".";
    std::string eval_method = "sa:30";
    double eps_b = default_eps_b, eps_sigma = default_eps_sigma, floor = default_log_floor;
    bool log_space = false;
    int bootstrap_n = 1000;
    std::uint64_t seed = 0;
    auto* evaluate = app.add_subcommand("evaluate", "metric report and diagnostics for a sim/obs pair");
    evaluate->add_option("--obs", obs_path, "observed CSV")->required();
    evaluate->add_option("--sim", sim_path, "simulated CSV")->required();
    evaluate->add_option("--out-dir", out_dir, "output directory");
    evaluate->add_option("--method", eval_method, "benchmark method");
    evaluate->add_option("--eps-b", eps_b, "benchmark-ratio guard");
    evaluate->add_option("--eps-sigma", eps_sigma, "segment-sigma guard");
    evaluate->add_option("--floor", floor, "log-transform floor");
    evaluate->add_flag("--log", log_space, "evaluate on log-transformed flows");
    evaluate->add_option("--bootstrap-n", bootstrap_n, "bootstrap replicates (0 disables)");
    evaluate->add_option("--seed", seed, "bootstrap seed");

    // --- calibrate ---
    detail::CalibArgs ca;
    auto* calibrate = app.add_subcommand("calibrate", "train the bucket model against a metric");
    calibrate->add_option("--forcings", ca.forcings_path, "forcings CSV (date,precip,pet)")->required();
    calibrate->add_option("--obs", ca.obs_path, "observed CSV")->required();
    calibrate->add_option("--out-dir", ca.out_dir, "output directory")->required();
    calibrate->add_option("--metric", ca.metric, "training metric");
    calibrate->add_option("--method", ca.method, "benchmark method (ltm | sa:N | ma:N)");
    calibrate->add_option("--epochs", ca.epochs, "Adam epochs");
    calibrate->add_option("--lr", ca.lr, "learning rate");
    calibrate->add_option("--seeds", ca.seeds, "number of random initialisations");
    calibrate->add_option("--train-fraction", ca.train_fraction, "share of year-pairs assigned to training");
    calibrate->add_option("--spinup-repeats", ca.spinup_repeats, "first-water-year repetitions");
    calibrate->add_option("--seed", ca.seed, "master seed");
    calibrate->add_option("--eps-b", ca.eps_b, "benchmark-ratio guard");
    calibrate->add_option("--fd-step", ca.fd_step, "parameter finite-difference step");

    // --- grad-check ---
    int gc_instances = 5;
    std::uint64_t gc_seed = 0;
    auto* grad = app.add_subcommand("grad-check", "verify analytic gradients against finite differences");
    grad->add_option("--seed", gc_seed, "random seed");
    grad->add_option("--n", gc_instances, "instances per metric/method");

    // --- synth ---
    std::string synth_config;
    bool synth_seed_set = false;
    std::uint64_t synth_seed = 0;
    auto* synth = app.add_subcommand("synth", "generate a synthetic catchment (forcings.csv, obs.csv)");
    synth->add_option("--config", synth_config, "key = value config file");
    synth->add_option("--out-dir", out_dir, "output directory");
    synth->add_option("--seed", synth_seed, "override config seed")->each([&](const std::string&) { synth_seed_set = true; });

    // --- experiment ---
    std::string exp_methods = "sa:365,sa:180,sa:90,sa:30,sa:7,sa:1";
    detail::CalibArgs ea;
    ea.metric = "jkge_aug";
    auto* experiment = app.add_subcommand("experiment", "train per benchmark method and cross-evaluate");
    experiment->add_option("--forcings", ea.forcings_path, "forcings CSV (date,precip,pet)")->required();
    experiment->add_option("--obs", ea.obs_path, "observed CSV")->required();
    experiment->add_option("--out-dir", ea.out_dir, "output directory")->required();
    experiment->add_option("--methods", exp_methods, "comma-separated benchmark methods");
    experiment->add_option("--metric", ea.metric, "non-stationary training metric");
    experiment->add_option("--epochs", ea.epochs, "Adam epochs");
    experiment->add_option("--lr", ea.lr, "learning rate");
    experiment->add_option("--seeds", ea.seeds, "number of random initialisations");
    experiment->add_option("--train-fraction", ea.train_fraction, "share of year-pairs assigned to training");
    experiment->add_option("--spinup-repeats", ea.spinup_repeats, "first-water-year repetitions");
    experiment->add_option("--seed", ea.seed, "master seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (convert->parsed()) {
            const auto q = load_daily_csv(in_path, {}, Unit::cfs);
            write_series_csv(out_path, convert_discharge_to_depth(q, area_km2));
            return 0;
        }

        if (benchmark->parsed()) {
            const auto method = BenchmarkMethod::parse(bench_method);
            const auto s = load_daily_csv(in_path, {}, Unit::mm_per_day);
            atomic_write(out_path, detail::benchmark_csv(s, build_benchmark(s, method)));
            return 0;
        }

        if (evaluate->parsed()) {
            const auto method = BenchmarkMethod::parse(eval_method);
            const auto pair = detail::load_pair(obs_path, sim_path);
            detail::write_evaluation(out_dir, pair, method, eps_b, eps_sigma, log_space, floor, bootstrap_n, seed);
            return 0;
        }

        if (calibrate->parsed()) {
            const auto metric = parse_metric(ca.metric);
            const auto method = BenchmarkMethod::parse(ca.method);
            auto setup = detail::make_setup(ca, metric, method);
            AdamConfig cfg;
            cfg.lr = ca.lr;
            cfg.epochs = ca.epochs;
            cfg.seed = derive_seed(ca.seed, "calibrate");
            const auto result = multi_seed_calibrate(setup, ca.seeds, cfg);

            fs::create_directories(ca.out_dir);
            atomic_write(fs::path(ca.out_dir) / "calibration.json",
                         calibration_to_json(result, setup).dump(2) + "\n");
            const auto params = BucketParams::from_unconstrained(result.best_params);
            auto sim_full = simulate(setup.forcings, params, setup.init_state, setup.scoring_offset, setup.forcing_start);
            write_series_csv(fs::path(ca.out_dir) / "sim.csv", slice(sim_full, setup.scoring_offset, sim_full.size()));
            return 0;
        }

        if (grad->parsed()) return detail::run_grad_check(gc_seed, gc_instances);

        if (synth->parsed()) {
            SynthConfig cfg;
            if (!synth_config.empty()) cfg = load_synth_config(synth_config);
            if (synth_seed_set) cfg.seed = synth_seed;
            const auto c = generate_catchment(cfg);
            fs::create_directories(out_dir);
            atomic_write(fs::path(out_dir) / "forcings.csv", detail::forcings_csv(c.precip, c.pet));
            write_series_csv(fs::path(out_dir) / "obs.csv", c.obs);
            return 0;
        }

        if (experiment->parsed()) {
            std::vector<BenchmarkMethod> methods;
            std::stringstream ss(exp_methods);
            std::string tok;
            while (std::getline(ss, tok, ',')) methods.push_back(BenchmarkMethod::parse(tok));
            if (methods.empty()) throw ArgumentError("no benchmark methods given");
            const auto metric = parse_metric(ea.metric);

            fs::create_directories(ea.out_dir);
            std::string summary = "trained_with,train_method,eval_method," + report_csv_header();

            struct Training {
                std::string label;
                MetricId metric;
                BenchmarkMethod method;
            };
            std::vector<Training> trainings = {{"kge_ss", MetricId::kge_ss, BenchmarkMethod::ltm()}};
            for (const auto& m : methods) trainings.push_back({metric_str(metric), metric, m});

            for (std::size_t i = 0; i < trainings.size(); ++i) {
                const auto& tr = trainings[i];
                auto setup = detail::make_setup(ea, tr.metric, tr.method);
                AdamConfig cfg;
                cfg.lr = ea.lr;
                cfg.epochs = ea.epochs;
                cfg.seed = derive_seed(ea.seed, "experiment", i);
                const auto result = multi_seed_calibrate(setup, ea.seeds, cfg);

                const fs::path run_dir = fs::path(ea.out_dir) / (tr.label + "_" + tr.method.str());
                fs::create_directories(run_dir);
                atomic_write(run_dir / "calibration.json", calibration_to_json(result, setup).dump(2) + "\n");

                const auto params = BucketParams::from_unconstrained(result.best_params);
                auto sim_full = simulate(setup.forcings, params, setup.init_state, setup.scoring_offset, setup.forcing_start);
                auto sim = slice(sim_full, setup.scoring_offset, sim_full.size());
                write_series_csv(run_dir / "sim.csv", sim);

                const PairedSeries pair(setup.obs, std::move(sim));
                for (const auto& em : methods) {
                    const auto rep = full_report(pair, em, ea.eps_b, false, default_log_floor, ea.eps_sigma);
                    summary += tr.label + "," + tr.method.str() + "," + em.str() + "," + report_csv_row(rep);
                }
            }
            atomic_write(fs::path(ea.out_dir) / "summary.csv", summary);
            return 0;
        }

        return 1;
    } catch (const CLI::Error&) {
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace jkge::cli
