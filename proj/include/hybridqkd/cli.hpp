// Copyright 2026 The hybridqkd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hybridqkd/analysis.hpp"
#include "hybridqkd/calibrate.hpp"
#include "hybridqkd/config.hpp"
#include "hybridqkd/error.hpp"
#include "hybridqkd/experiment.hpp"
#include "hybridqkd/io.hpp"

namespace hybridqkd {

/// Visibilities and rates recovered from a set of scan curves.
struct CurveAnalysis {
    std::optional<Visibility> v_zz;
    std::optional<FringeFit> x_fit;
    std::optional<double> z_rate;
    std::optional<double> x_rate;
};

/// Z: same- versus cross-pairing counts at the scan point where the
/// same-pairing curve peaks. X: fringe fit of the same-pairing sum.
inline CurveAnalysis analyze_curve(const Curve &curve) {
    CurveAnalysis out;
    Curve z, x;
    for (const auto &p : curve) {
        auto b = pair_basis(p.pair);
        if (b == Basis::Z) {
            z.push_back(p);
        } else if (b == Basis::X) {
            x.push_back(p);
        }
    }
    auto durations = [](const Curve &c) {
        std::map<double, double> d;
        for (const auto &p : c) {
            d[p.scan_value] = p.duration;
        }
        return d;
    };
    if (!z.empty()) {
        auto same = curve_sum(z, same_pairs(Basis::Z));
        auto cross = curve_sum(z, cross_pairs(Basis::Z));
        std::size_t best = 0;
        for (std::size_t i = 1; i < same.size(); ++i) {
            if (same[i].second > same[best].second) {
                best = i;
            }
        }
        out.v_zz = visibility(same[best].second, cross[best].second);
        double d = durations(z).at(same[best].first);
        if (d > 0) {
            out.z_rate = (same[best].second + cross[best].second) / d;
        }
    }
    if (!x.empty()) {
        out.x_fit = fit_fringe(curve_sum(x, same_pairs(Basis::X)));
        double total = 0, time = 0;
        for (const auto &p : x) {
            total += static_cast<double>(p.counts);
        }
        for (const auto &[v, d] : durations(x)) {
            time += d;
        }
        if (time > 0) {
            out.x_rate = total / time;
        }
    }
    return out;
}

struct DemoCheck {
    std::string name;
    double value = 0;
    double sigma = 0;
    double target = 0;
    double lo = 0;
    double hi = 0;
    bool pass = false;
};

struct DemoResult {
    CalibrationResult coarse;  // fit against the analytic expectation
    CalibrationResult fit;     // Monte Carlo fit started from `coarse`
    SecurityReport report;
    std::vector<DemoCheck> checks;
    bool all_pass = false;
};

/// Starting point for the demo calibration: nominal hardware with a moderate
/// extinction ratio and phase spread.
inline ExperimentSetup paper_start_setup() {
    ExperimentSetup s = default_setup();
    s.transformer.glan_extinction_ratio = 100;
    s.source.phase_sigma = 0.3;
    return s;
}

inline MetricPlan paper_metric_plan() {
    return {.z_duration = 20.0, .x_points = 10, .x_duration = 3.0};
}

/// Fits pair rate, phase spread and extinction ratio to the published
/// visibilities and rates, then grades the fitted simulation.
inline DemoResult run_demo_paper(const ExperimentSetup &start, std::uint64_t seed, const MetricPlan &plan,
                                 unsigned threads = 1, const CalibrationTargets &targets = {}) {
    std::vector<FreeParamSpec> free{default_bounds(FreeParam::PairRate), default_bounds(FreeParam::PhaseSigma),
                                    default_bounds(FreeParam::ExtinctionRatio)};
    DemoResult r;
    CalibrationOptions coarse_opt;
    coarse_opt.log_step = 0.5;
    coarse_opt.linear_step = 0.2;
    coarse_opt.simplex.ftol = 1e-6;
    r.coarse = calibrate(start, targets, free,
                         [&](const ExperimentSetup &s) { return expected_metrics(s, plan); }, coarse_opt);
    CalibrationOptions fine_opt;
    fine_opt.log_step = 0.03;
    fine_opt.linear_step = 0.02;
    // Shot noise moves the objective by far more than 1e-3; polishing below it is wasted work.
    fine_opt.simplex.ftol = 0.05;
    RunOptions ro{.threads = threads};
    r.fit = calibrate(r.coarse.setup, targets, free,
                      [&](const ExperimentSetup &s) { return measure_metrics(s, plan, seed, ro); }, fine_opt);
    const Metrics &m = r.fit.metrics;
    r.report = security_metrics(std::clamp(m.v_zz, -1.0, 1.0), std::clamp(m.v_xx, -1.0, 1.0), m.r_z, 1.0,
                                m.v_zz_sigma, m.v_xx_sigma);
    auto add = [&](std::string name, double v, double s, double target, double lo, double hi) {
        r.checks.push_back({std::move(name), v, s, target, lo, hi, v >= lo && v <= hi});
    };
    add("V_zz", m.v_zz, m.v_zz_sigma, targets.v_zz, targets.v_zz - targets.v_zz_tol, targets.v_zz + targets.v_zz_tol);
    add("V_xx", m.v_xx, m.v_xx_sigma, targets.v_xx, targets.v_xx - targets.v_xx_tol, targets.v_xx + targets.v_xx_tol);
    add("R_z", m.r_z, m.r_z_sigma, targets.r_z, targets.r_z * (1 - targets.rate_rel_tol),
        targets.r_z * (1 + targets.rate_rel_tol));
    add("R_x", m.r_x, m.r_x_sigma, targets.r_x, targets.r_x * (1 - targets.rate_rel_tol),
        targets.r_x * (1 + targets.rate_rel_tol));
    // Bell violation and a distillable key are claims, not numbers, so they
    // get open-ended bounds.
    add("S", r.report.chsh_s, 0, 2, std::nextafter(2.0, 3.0), 2 * std::numbers::sqrt2);
    add("key_fraction", r.report.key_fraction, 0, 0, std::nextafter(0.0, 1.0), 1);
    r.all_pass = std::all_of(r.checks.begin(), r.checks.end(), [](const DemoCheck &c) { return c.pass; });
    return r;
}

inline Json to_json(const DemoResult &d, std::uint64_t seed) {
    Json checks = Json::array();
    for (const auto &c : d.checks) {
        checks.push_back(Json{{"name", c.name},
                              {"value", c.value},
                              {"sigma", c.sigma},
                              {"target", c.target},
                              {"lo", c.lo},
                              {"hi", c.hi},
                              {"pass", c.pass}});
    }
    auto params = [](const ExperimentSetup &s) {
        return Json{{"pair_rate_mu", s.source.pair_rate_mu},
                    {"phase_sigma", s.source.phase_sigma},
                    {"glan_extinction_ratio", s.transformer.glan_extinction_ratio}};
    };
    return Json{{"seed", seed},
                {"config_hash", config_hash(d.fit.setup)},
                {"coarse", Json{{"parameters", params(d.coarse.setup)},
                                {"metrics", to_json(d.coarse.metrics)},
                                {"objective", d.coarse.objective},
                                {"evaluations", d.coarse.evaluations}}},
                {"fit", Json{{"parameters", params(d.fit.setup)},
                             {"metrics", to_json(d.fit.metrics)},
                             {"residuals", to_json(d.fit.residuals)},
                             {"objective", d.fit.objective},
                             {"iterations", d.fit.iterations},
                             {"evaluations", d.fit.evaluations}}},
                {"security", to_json(d.report)},
                {"checks", checks},
                {"all_pass", d.all_pass}};
}

inline std::string to_text(const DemoResult &d) {
    std::ostringstream o;
    o << std::left << std::setw(14) << "quantity" << std::setw(24) << "simulated" << std::setw(12) << "published"
      << std::setw(26) << "accepted range"
      << "result\n";
    for (const auto &c : d.checks) {
        std::ostringstream v, range;
        v << std::setprecision(5) << c.value;
        if (c.sigma > 0) {
            v << " +/- " << std::setprecision(2) << c.sigma;
        }
        if (c.lo > 0 && c.lo < 1e-300) {
            range << "> " << std::setprecision(5) << c.target;
        } else {
            range << "[" << std::setprecision(5) << c.lo << ", " << c.hi << "]";
        }
        std::ostringstream t;
        t << std::setprecision(5) << c.target;
        o << std::setw(14) << c.name << std::setw(24) << v.str() << std::setw(12) << t.str() << std::setw(26)
          << range.str() << (c.pass ? "PASS" : "FAIL") << "\n";
    }
    o << "fitted: pair_rate_mu=" << d.fit.setup.source.pair_rate_mu
      << " phase_sigma=" << d.fit.setup.source.phase_sigma
      << " glan_extinction_ratio=" << d.fit.setup.transformer.glan_extinction_ratio << "\n";
    return o.str();
}

namespace detail {

inline void print_error(std::ostream &err, std::string_view code, const std::string &message) {
    err << Json{{"error", code}, {"message", message}}.dump() << "\n";
}

inline ExperimentSetup load_setup(const std::string &path) {
    return path.empty() ? default_setup() : parse_config(path);
}

inline Basis parse_basis(const std::string &b) {
    if (b == "Z" || b == "z") {
        return Basis::Z;
    }
    if (b == "X" || b == "x") {
        return Basis::X;
    }
    throw Error(ErrorCode::UsageError, "basis must be Z or X");
}

}  // namespace detail

/// Entry point shared by the executable and the tests. Returns the process
/// exit code; failures print one JSON line {"error", "message"} to `err`.
inline int run_command(int argc, const char *const *argv, std::ostream &out = std::cout,
                       std::ostream &err = std::cerr) {
    CLI::App app{"Hybrid time-bin / polarization entanglement distribution simulator", "hybridqkd"};
    app.set_help_all_flag("--help-all");
    bool print_defaults = false;
    app.add_flag("--print-defaults", print_defaults, "Print the default configuration and exit");
    app.require_subcommand(0, 1);

    std::string config;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    unsigned threads = 1;
    std::string basis;
    double duration = 1.0;
    double lo = 0, hi = 0, step = 0;

    auto common = [&](CLI::App *c, bool stochastic) {
        c->add_option("--config", config, "Configuration file (defaults when omitted)");
        c->add_option("--out", out_dir, "Output directory")->capture_default_str();
        if (stochastic) {
            c->add_option("--seed", seed, "Random seed")->required();
            c->add_option("--threads", threads, "Worker threads")->capture_default_str();
        }
    };

    auto *sim = app.add_subcommand("simulate", "Monte Carlo run: run.json and clicks.csv");
    common(sim, true);
    sim->add_option("--duration", duration, "Simulated seconds")->capture_default_str();
    sim->add_option("--basis", basis, "Override Alice's basis (Z or X)");

    auto *sd = app.add_subcommand("scan-delay", "Coincidences versus delay");
    common(sd, true);
    sd->add_option("--d-min", lo, "First delay, seconds")->required();
    sd->add_option("--d-max", hi, "Last delay, seconds")->required();
    sd->add_option("--step", step, "Delay step, seconds")->required();
    sd->add_option("--duration", duration, "Seconds per point")->capture_default_str();
    sd->add_option("--basis", basis, "Override Alice's basis (Z or X)");

    auto *st = app.add_subcommand("scan-temp", "X-basis coincidences versus decoder temperature");
    common(st, true);
    st->add_option("--t-min", lo, "First temperature, C")->required();
    st->add_option("--t-max", hi, "Last temperature, C")->required();
    st->add_option("--step", step, "Temperature step, K")->required();
    st->add_option("--duration", duration, "Seconds per point")->capture_default_str();

    MetricPlan plan = paper_metric_plan();
    CalibrationTargets targets;
    std::vector<std::string> free_names{"pair_rate_mu", "phase_sigma", "glan_extinction_ratio"};
    auto plan_opts = [&](CLI::App *c) {
        c->add_option("--z-duration", plan.z_duration, "Z run length, seconds")->capture_default_str();
        c->add_option("--x-points", plan.x_points, "Temperature points over one period")->capture_default_str();
        c->add_option("--x-duration", plan.x_duration, "Seconds per temperature point")->capture_default_str();
    };
    auto *cal = app.add_subcommand("calibrate", "Fit free parameters to target metrics");
    common(cal, true);
    plan_opts(cal);
    cal->add_option("--free", free_names, "Free parameters")->capture_default_str();
    cal->add_option("--target-vzz", targets.v_zz)->capture_default_str();
    cal->add_option("--target-vxx", targets.v_xx)->capture_default_str();
    cal->add_option("--target-rz", targets.r_z)->capture_default_str();
    cal->add_option("--target-rx", targets.r_x)->capture_default_str();

    std::vector<std::string> counts_files;
    double f_ec = 1.0;
    std::optional<double> given_vzz, given_vxx;
    auto *an = app.add_subcommand("analyze", "Security report from curve CSV files");
    an->add_option("--counts", counts_files, "Curve CSV files")->required();
    an->add_option("--f-ec", f_ec, "Error-correction inefficiency")->capture_default_str();
    an->add_option("--v-zz", given_vzz, "Z visibility when no Z curve is supplied");
    an->add_option("--v-xx", given_vxx, "X visibility when no X curve is supplied");
    an->add_option("--out", out_dir, "Output directory")->capture_default_str();

    auto *demo = app.add_subcommand("demo-paper", "Calibrate to the published numbers and grade the result");
    common(demo, true);
    plan_opts(demo);

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp &) {
            out << app.help();
            return 0;
        } catch (const CLI::CallForAllHelp &) {
            out << app.help("", CLI::AppFormatMode::All);
            return 0;
        } catch (const CLI::ParseError &e) {
            detail::print_error(err, "UsageError", e.what());
            return 2;
        }
        if (print_defaults) {
            out << serialize_config(default_setup());
            return 0;
        }
        if (app.get_subcommands().empty()) {
            detail::print_error(err, "UsageError", "a subcommand is required (try --help)");
            return 2;
        }
        RunOptions ro{.threads = std::max(1u, threads)};

        if (sim->parsed()) {
            ExperimentSetup s = detail::load_setup(config);
            if (!basis.empty()) {
                s.alice_basis = detail::parse_basis(basis);
            }
            std::vector<ClickEvent> clicks;
            ro.keep_clicks = true;
            auto rec = run_montecarlo(s, duration, seed, ro, &clicks);
            for (const auto &p : write_outputs(rec, clicks, out_dir)) {
                out << p << "\n";
            }
            return 0;
        }
        if (sd->parsed() || st->parsed()) {
            ExperimentSetup s = detail::load_setup(config);
            if (sd->parsed() && !basis.empty()) {
                s.alice_basis = detail::parse_basis(basis);
            }
            auto grid = scan_grid(lo, hi, step);
            Curve c = sd->parsed() ? scan_delay(s, grid, duration, seed, ro)
                                   : scan_temperature(s, grid, duration, seed, ro);
            Provenance p{seed, config_hash(s)};
            for (const auto &path : write_outputs(c, sd->parsed() ? "scan_delay" : "scan_temp", p, out_dir)) {
                out << path << "\n";
            }
            return 0;
        }
        if (cal->parsed()) {
            ExperimentSetup s = detail::load_setup(config);
            std::vector<FreeParamSpec> free;
            for (const auto &n : free_names) {
                free.push_back(default_bounds(parse_free_param(n)));
            }
            auto res = calibrate(s, targets, free,
                                 [&](const ExperimentSetup &x) { return measure_metrics(x, plan, seed, ro); });
            Json j{{"seed", seed},
                   {"config_hash", config_hash(res.setup)},
                   {"metrics", to_json(res.metrics)},
                   {"residuals", to_json(res.residuals)},
                   {"objective", res.objective},
                   {"iterations", res.iterations},
                   {"evaluations", res.evaluations},
                   {"within_tolerance", within_tolerance(res.metrics, targets)}};
            std::string cfg = provenance_line({seed, config_hash(res.setup)}) + serialize_config(res.setup);
            for (const auto &p : write_files(out_dir, {{"fitted.cfg", cfg}, {"residuals.json", dump_json(j)}})) {
                out << p << "\n";
            }
            return 0;
        }
        if (an->parsed()) {
            Curve all;
            for (const auto &f : counts_files) {
                std::ifstream in(f, std::ios::binary);
                if (!in) {
                    throw Error(ErrorCode::IoError, "cannot read '" + f + "'");
                }
                std::ostringstream buf;
                buf << in.rdbuf();
                auto c = parse_curve_csv(buf.str());
                all.insert(all.end(), c.begin(), c.end());
            }
            if (all.empty()) {
                throw Error(ErrorCode::EmptyOutput, "no curve points in the input");
            }
            auto a = analyze_curve(all);
            std::string zsrc = "measured", xsrc = "measured";
            double vz = 0, vx = 0, vz_s = 0, vx_s = 0;
            if (a.v_zz) {
                vz = a.v_zz->value;
                vz_s = a.v_zz->sigma;
            }
            if (a.x_fit) {
                vx = std::clamp(a.x_fit->visibility, -1.0, 1.0);
                vx_s = a.x_fit->visibility_sigma;
            }
            if (!a.v_zz) {
                if (given_vzz) {
                    vz = *given_vzz;
                    zsrc = "given";
                } else {
                    vz = vx;
                    zsrc = "assumed_equal_to_x";
                }
            }
            if (!a.x_fit) {
                if (given_vxx) {
                    vx = *given_vxx;
                    xsrc = "given";
                } else {
                    vx = vz;
                    xsrc = "assumed_equal_to_z";
                }
            }
            if (!a.v_zz && !a.x_fit) {
                throw Error(ErrorCode::EmptyOutput, "input holds neither Z nor X channel pairs");
            }
            double sifted = a.z_rate.value_or(a.x_rate.value_or(0.0));
            auto rep = security_metrics(vz, vx, sifted, f_ec, vz_s, vx_s);
            Json j = to_json(rep);
            j["v_zz_origin"] = zsrc;
            j["v_xx_origin"] = xsrc;
            if (a.x_fit) {
                j["x_fit"] = Json{{"offset", a.x_fit->offset},
                                  {"amplitude", a.x_fit->amplitude},
                                  {"period", a.x_fit->period},
                                  {"phase", a.x_fit->phase},
                                  {"rms", a.x_fit->rms}};
            }
            write_files(out_dir, {{"report.json", dump_json(j)}});
            out << j.dump() << "\n" << to_text(rep);
            return 0;
        }
        if (demo->parsed()) {
            ExperimentSetup s = config.empty() ? paper_start_setup() : parse_config(config);
            auto d = run_demo_paper(s, seed, plan, ro.threads);
            std::string cfg = provenance_line({seed, config_hash(d.fit.setup)}) + serialize_config(d.fit.setup);
            write_files(out_dir, {{"demo.json", dump_json(to_json(d, seed))},
                                  {"fitted.cfg", cfg},
                                  {"report.txt", to_text(d) + to_text(d.report)}});
            out << to_text(d) << to_text(d.report);
            return d.all_pass ? 0 : 1;
        }
    } catch (const Error &e) {
        detail::print_error(err, error_code_name(e.code()), e.message());
        return 1;
    } catch (const std::exception &e) {
        detail::print_error(err, "InternalError", e.what());
        return 1;
    }
    return 0;
}

}  // namespace hybridqkd
