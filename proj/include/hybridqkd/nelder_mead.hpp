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

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "hybridqkd/error.hpp"

namespace hybridqkd {

struct NelderMeadOptions {
    double ftol = 1e-3;  // stop once max f - min f over the simplex is below this
    int max_iterations = 500;
};

struct NelderMeadResult {
    std::vector<double> x;
    double f = 0;
    int iterations = 0;
    int evaluations = 0;
};

/// Downhill simplex with the standard coefficients (1, 2, 0.5, 0.5). Points
/// are clamped to [lo, hi] before evaluation. Throws NoConvergence when the
/// iteration cap is reached first.
inline NelderMeadResult nelder_mead(const std::function<double(const std::vector<double> &)> &f,
                                    std::vector<double> x0, const std::vector<double> &step,
                                    const std::vector<double> &lo, const std::vector<double> &hi,
                                    const NelderMeadOptions &opt = {}) {
    const std::size_t n = x0.size();
    if (step.size() != n || lo.size() != n || hi.size() != n) {
        throw Error(ErrorCode::InvariantViolation, "simplex dimensions disagree");
    }
    auto clamp = [&](std::vector<double> x) {
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = std::clamp(x[i], lo[i], hi[i]);
        }
        return x;
    };
    NelderMeadResult res;
    auto eval = [&](const std::vector<double> &x) {
        ++res.evaluations;
        double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::max();
    };

    std::vector<std::vector<double>> pts{clamp(x0)};
    for (std::size_t i = 0; i < n; ++i) {
        auto p = pts[0];
        p[i] += step[i];
        if (p[i] > hi[i]) {
            p[i] = pts[0][i] - step[i];
        }
        pts.push_back(clamp(p));
    }
    std::vector<double> fv;
    for (const auto &p : pts) {
        fv.push_back(eval(p));
    }

    std::vector<std::size_t> order(n + 1);
    auto sort_simplex = [&] {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::vector<std::vector<double>> p2;
        std::vector<double> f2;
        for (auto i : order) {
            p2.push_back(pts[i]);
            f2.push_back(fv[i]);
        }
        pts = std::move(p2);
        fv = std::move(f2);
    };
    auto along = [&](const std::vector<double> &c, const std::vector<double> &w, double t) {
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) {
            r[i] = c[i] + t * (w[i] - c[i]);
        }
        return clamp(r);
    };

    sort_simplex();
    while (true) {
        if (n == 0 || fv.back() - fv.front() <= opt.ftol) {
            break;
        }
        if (res.iterations >= opt.max_iterations) {
            throw Error(ErrorCode::NoConvergence, "simplex did not reach the objective tolerance within " +
                                                      std::to_string(opt.max_iterations) + " iterations");
        }
        ++res.iterations;
        std::vector<double> c(n, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                c[i] += pts[k][i] / static_cast<double>(n);
            }
        }
        auto xr = along(c, pts[n], -1.0);
        double fr = eval(xr);
        if (fr < fv[0]) {
            auto xe = along(c, pts[n], -2.0);
            double fe = eval(xe);
            if (fe < fr) {
                pts[n] = xe;
                fv[n] = fe;
            } else {
                pts[n] = xr;
                fv[n] = fr;
            }
        } else if (fr < fv[n - 1]) {
            pts[n] = xr;
            fv[n] = fr;
        } else {
            bool outside = fr < fv[n];
            auto xc = outside ? along(c, xr, 0.5) : along(c, pts[n], 0.5);
            double fc = eval(xc);
            if (fc < (outside ? fr : fv[n])) {
                pts[n] = xc;
                fv[n] = fc;
            } else {
                for (std::size_t k = 1; k <= n; ++k) {
                    pts[k] = along(pts[0], pts[k], 0.5);
                    fv[k] = eval(pts[k]);
                }
            }
        }
        sort_simplex();
    }
    res.x = pts[0];
    res.f = fv[0];
    return res;
}

}  // namespace hybridqkd
