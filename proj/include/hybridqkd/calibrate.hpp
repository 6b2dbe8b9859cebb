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

#include <cmath>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "hybridqkd/error.hpp"
#include "hybridqkd/experiment.hpp"
#include "hybridqkd/nelder_mead.hpp"

namespace hybridqkd {

enum class FreeParam { PairRate, PhaseSigma, ExtinctionRatio, DarkRateAlice, DarkRateBob };

inline std::string_view free_param_name(FreeParam p) {
    switch (p) {
        case FreeParam::PairRate: return "pair_rate_mu";
        case FreeParam::PhaseSigma: return "phase_sigma";
        case FreeParam::ExtinctionRatio: return "glan_extinction_ratio";
        case FreeParam::DarkRateAlice: return "dark_rate_alice";
        case FreeParam::DarkRateBob: return "dark_rate_bob";
    }
    return "?";
}

inline FreeParam parse_free_param(std::string_view s) {
    for (auto p : {FreeParam::PairRate, FreeParam::PhaseSigma, FreeParam::ExtinctionRatio, FreeParam::DarkRateAlice,
                   FreeParam::DarkRateBob}) {
        if (free_param_name(p) == s) {
            return p;
        }
    }
    throw Error(ErrorCode::UsageError, "unknown free parameter '" + std::string(s) + "'");
}

struct FreeParamSpec {
    FreeParam param;
    double lo;
    double hi;
};

inline FreeParamSpec default_bounds(FreeParam p) {
    switch (p) {
        case FreeParam::PairRate: return {p, 1e3, 1e8};
        case FreeParam::PhaseSigma: return {p, 0.0, 2.0};
        case FreeParam::ExtinctionRatio: return {p, 2.0, 1e9};
        case FreeParam::DarkRateAlice: return {p, 1e-1, 1e6};
        case FreeParam::DarkRateBob: return {p, 1e-1, 1e8};
    }
    return {p, 0, 1};
}

/// Scale-free parameters are searched in log space.
inline bool is_log_param(FreeParam p) {
    return p != FreeParam::PhaseSigma;
}

inline double get_param(const ExperimentSetup &s, FreeParam p) {
    switch (p) {
        case FreeParam::PairRate: return s.source.pair_rate_mu;
        case FreeParam::PhaseSigma: return s.source.phase_sigma;
        case FreeParam::ExtinctionRatio: return s.transformer.glan_extinction_ratio;
        case FreeParam::DarkRateAlice: return s.detectors.at(Channel::AZ0).dark_rate;
        case FreeParam::DarkRateBob: return s.detectors.at(Channel::BZ0).dark_rate;
    }
    return 0;
}

/// Dark rates are shared by all detectors of one party.
inline void set_param(ExperimentSetup &s, FreeParam p, double v) {
    switch (p) {
        case FreeParam::PairRate: s.source.pair_rate_mu = v; return;
        case FreeParam::PhaseSigma: s.source.phase_sigma = v; return;
        case FreeParam::ExtinctionRatio: s.transformer.glan_extinction_ratio = v; return;
        case FreeParam::DarkRateAlice:
        case FreeParam::DarkRateBob:
            for (auto &[c, d] : s.detectors) {
                if (channel_party(c) == (p == FreeParam::DarkRateAlice ? Party::A : Party::B)) {
                    d.dark_rate = v;
                }
            }
            return;
    }
}

/// Measured values and the half-widths the fit is judged against.
struct CalibrationTargets {
    double v_zz = 0.958;
    double v_xx = 0.88;
    double r_z = 820.0;
    double r_x = 950.0;
    double v_zz_tol = 0.002;
    double v_xx_tol = 0.01;
    double rate_rel_tol = 0.10;
};

struct Residuals {
    double v_zz = 0;  // (simulated - target) / target
    double v_xx = 0;
    double r_z = 0;
    double r_x = 0;
};

inline Residuals residuals(const Metrics &m, const CalibrationTargets &t) {
    return {(m.v_zz - t.v_zz) / t.v_zz, (m.v_xx - t.v_xx) / t.v_xx, (m.r_z - t.r_z) / t.r_z, (m.r_x - t.r_x) / t.r_x};
}

/// Sum of squared relative residuals, each divided by its relative tolerance
/// so that a value of 1 per term means "at the edge of the band".
inline double calibration_objective(const Metrics &m, const CalibrationTargets &t) {
    Residuals r = residuals(m, t);
    double a = r.v_zz / (t.v_zz_tol / t.v_zz);
    double b = r.v_xx / (t.v_xx_tol / t.v_xx);
    double c = r.r_z / t.rate_rel_tol;
    double d = r.r_x / t.rate_rel_tol;
    return a * a + b * b + c * c + d * d;
}

inline bool within_tolerance(const Metrics &m, const CalibrationTargets &t) {
    return std::abs(m.v_zz - t.v_zz) <= t.v_zz_tol && std::abs(m.v_xx - t.v_xx) <= t.v_xx_tol &&
           std::abs(m.r_z - t.r_z) <= t.rate_rel_tol * t.r_z && std::abs(m.r_x - t.r_x) <= t.rate_rel_tol * t.r_x;
}

using MetricsFn = std::function<Metrics(const ExperimentSetup &)>;

struct CalibrationOptions {
    double log_step = 0.3;     // initial simplex step for log-scaled parameters
    double linear_step = 0.1;  // same for phase_sigma, radians
    NelderMeadOptions simplex;
};

struct CalibrationResult {
    ExperimentSetup setup;
    Metrics metrics;
    Residuals residuals;
    double objective = 0;
    int iterations = 0;
    int evaluations = 0;
};

/// Fits the free parameters of `start` so that `evaluate` reproduces the
/// targets. `evaluate` must be deterministic (fixed seed) for the simplex to
/// converge.
inline CalibrationResult calibrate(const ExperimentSetup &start, const CalibrationTargets &targets,
                                   const std::vector<FreeParamSpec> &free, const MetricsFn &evaluate,
                                   const CalibrationOptions &opt = {}) {
    start.validate();
    std::vector<double> x0, step, lo, hi;
    for (const auto &f : free) {
        if (!std::isfinite(f.lo) || !std::isfinite(f.hi) || !(f.lo < f.hi) || (is_log_param(f.param) && f.lo <= 0)) {
            throw Error(ErrorCode::InvariantViolation,
                        "bounds for " + std::string(free_param_name(f.param)) + " must be finite and ordered");
        }
        bool lg = is_log_param(f.param);
        double v = std::clamp(get_param(start, f.param), f.lo, f.hi);
        x0.push_back(lg ? std::log(v) : v);
        lo.push_back(lg ? std::log(f.lo) : f.lo);
        hi.push_back(lg ? std::log(f.hi) : f.hi);
        step.push_back(lg ? opt.log_step : opt.linear_step);
    }
    auto apply = [&](const std::vector<double> &x) {
        ExperimentSetup s = start;
        for (std::size_t i = 0; i < free.size(); ++i) {
            set_param(s, free[i].param, is_log_param(free[i].param) ? std::exp(x[i]) : x[i]);
        }
        return s;
    };
    auto objective = [&](const std::vector<double> &x) { return calibration_objective(evaluate(apply(x)), targets); };

    CalibrationResult out;
    if (free.empty()) {
        out.setup = start;
    } else {
        auto nm = nelder_mead(objective, x0, step, lo, hi, opt.simplex);
        out.setup = apply(nm.x);
        out.iterations = nm.iterations;
        out.evaluations = nm.evaluations;
    }
    out.metrics = evaluate(out.setup);
    out.residuals = residuals(out.metrics, targets);
    out.objective = calibration_objective(out.metrics, targets);
    return out;
}

}  // namespace hybridqkd
