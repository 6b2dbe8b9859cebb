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
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "hybridqkd/error.hpp"

namespace hybridqkd {

struct Visibility {
    double value = 0;
    double sigma = 0;
};

/// Contrast of two count totals with Poisson error propagation.
inline Visibility visibility(double c_max, double c_min) {
    if (!(c_max >= 0) || !(c_min >= 0)) {
        throw Error(ErrorCode::InvariantViolation, "counts must be non-negative");
    }
    double s = c_max + c_min;
    if (s <= 0) {
        throw Error(ErrorCode::ZeroCounts, "visibility of zero counts");
    }
    return {(c_max - c_min) / s, 2 * std::sqrt(c_max * c_min * s) / (s * s)};
}

/// counts ~ offset + amplitude * cos(2 pi x / period + phase).
struct FringeFit {
    double offset = 0;
    double amplitude = 0;
    double period = 0;
    double phase = 0;
    double visibility = 0;
    double visibility_sigma = 0;
    double rms = 0;
};

namespace detail {

struct LinearFringe {
    double c = 0, a = 0, b = 0;
    double rss = std::numeric_limits<double>::infinity();
    std::array<std::array<double, 3>, 3> inverse{};
    bool ok = false;
};

inline LinearFringe solve_fixed_period(const std::vector<std::pair<double, double>> &pts, double period) {
    LinearFringe out;
    double k = 2 * std::numbers::pi / period;
    std::array<std::array<double, 3>, 3> m{};
    std::array<double, 3> r{};
    for (auto [x, y] : pts) {
        std::array<double, 3> f{1.0, std::cos(k * x), std::sin(k * x)};
        for (int i = 0; i < 3; ++i) {
            r[i] += f[i] * y;
            for (int j = 0; j < 3; ++j) {
                m[i][j] += f[i] * f[j];
            }
        }
    }
    auto &inv = out.inverse;
    inv[0][0] = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    inv[0][1] = m[0][2] * m[2][1] - m[0][1] * m[2][2];
    inv[0][2] = m[0][1] * m[1][2] - m[0][2] * m[1][1];
    inv[1][0] = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    inv[1][1] = m[0][0] * m[2][2] - m[0][2] * m[2][0];
    inv[1][2] = m[0][2] * m[1][0] - m[0][0] * m[1][2];
    inv[2][0] = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    inv[2][1] = m[0][1] * m[2][0] - m[0][0] * m[2][1];
    inv[2][2] = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    double det = m[0][0] * inv[0][0] + m[0][1] * inv[1][0] + m[0][2] * inv[2][0];
    double scale = std::max({std::abs(m[0][0]), std::abs(m[1][1]), std::abs(m[2][2]), 1e-300});
    if (!std::isfinite(det) || std::abs(det) <= 1e-12 * scale * scale * scale) {
        return out;
    }
    for (auto &row : inv) {
        for (double &v : row) {
            v /= det;
        }
    }
    std::array<double, 3> p{};
    for (int i = 0; i < 3; ++i) {
        p[i] = inv[i][0] * r[0] + inv[i][1] * r[1] + inv[i][2] * r[2];
    }
    out.c = p[0];
    out.a = p[1];
    out.b = p[2];
    out.rss = 0;
    for (auto [x, y] : pts) {
        double e = y - (out.c + out.a * std::cos(k * x) + out.b * std::sin(k * x));
        out.rss += e * e;
    }
    out.ok = true;
    return out;
}

inline FringeFit finish_fit(const std::vector<std::pair<double, double>> &pts, double period, const LinearFringe &lf) {
    FringeFit f;
    f.period = period;
    f.offset = lf.c;
    f.amplitude = std::hypot(lf.a, lf.b);
    f.phase = std::atan2(-lf.b, lf.a);
    auto n = static_cast<double>(pts.size());
    f.rms = std::sqrt(lf.rss / n);
    if (!lf.ok || !std::isfinite(f.offset) || !std::isfinite(f.amplitude) || !(f.offset > 0)) {
        throw Error(ErrorCode::FitDiverged, "fringe fit did not produce a positive finite offset");
    }
    f.visibility = f.amplitude / f.offset;
    double s2 = n > 3 ? lf.rss / (n - 3) : 0.0;
    std::array<double, 3> g{-f.amplitude / (f.offset * f.offset), 0.0, 0.0};
    if (f.amplitude > 0) {
        g[1] = lf.a / (f.amplitude * f.offset);
        g[2] = lf.b / (f.amplitude * f.offset);
    }
    double var = 0;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            var += g[i] * lf.inverse[i][j] * g[j];
        }
    }
    f.visibility_sigma = std::sqrt(std::max(0.0, var * s2));
    if (!std::isfinite(f.visibility) || !std::isfinite(f.phase)) {
        throw Error(ErrorCode::FitDiverged, "fringe fit produced non-finite parameters");
    }
    return f;
}

}  // namespace detail

/// Least-squares sinusoid through (x, counts). The period is searched on a
/// log grid between the sampling limit and twice the span, then polished with
/// Brent's method; at each trial period the offset and quadratures are a
/// linear solve. Pass `fixed_period` to skip the search.
inline FringeFit fit_fringe(std::vector<std::pair<double, double>> points,
                            std::optional<double> fixed_period = std::nullopt) {
    if (points.size() < 5) {
        throw Error(ErrorCode::InsufficientSpan, "fringe fit needs at least 5 points");
    }
    for (auto [x, y] : points) {
        if (!std::isfinite(x) || !std::isfinite(y)) {
            throw Error(ErrorCode::FitDiverged, "non-finite fringe data");
        }
    }
    std::sort(points.begin(), points.end());
    double span = points.back().first - points.front().first;
    double min_dx = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < points.size(); ++i) {
        double dx = points[i].first - points[i - 1].first;
        if (dx > 0) {
            min_dx = std::min(min_dx, dx);
        }
    }
    if (!(span > 0) || !std::isfinite(min_dx)) {
        throw Error(ErrorCode::InsufficientSpan, "fringe points do not span any x range");
    }

    if (fixed_period) {
        if (!(*fixed_period > 0)) {
            throw Error(ErrorCode::FitDiverged, "fixed period must be positive");
        }
        if (span < *fixed_period / 2) {
            throw Error(ErrorCode::InsufficientSpan, "points span less than half a period");
        }
        return detail::finish_fit(points, *fixed_period, detail::solve_fixed_period(points, *fixed_period));
    }

    const double lo = std::log(2 * min_dx);
    const double hi = std::log(2 * span);
    auto rss_at = [&](double log_p) { return detail::solve_fixed_period(points, std::exp(log_p)).rss; };
    constexpr int kGrid = 400;
    int best = 0;
    double best_rss = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= kGrid; ++i) {
        double r = rss_at(lo + (hi - lo) * i / kGrid);
        if (r < best_rss) {
            best_rss = r;
            best = i;
        }
    }
    double a = lo + (hi - lo) * std::max(0, best - 1) / kGrid;
    double b = lo + (hi - lo) * std::min(kGrid, best + 1) / kGrid;
    auto [log_p, rss] = boost::math::tools::brent_find_minima(rss_at, a, b, std::numeric_limits<double>::digits);
    if (!(rss <= best_rss)) {
        log_p = lo + (hi - lo) * best / kGrid;
    }
    double period = std::exp(log_p);
    auto lf = detail::solve_fixed_period(points, period);
    auto fit = detail::finish_fit(points, period, lf);
    if (fit.amplitude > 0 && span < period / 2) {
        throw Error(ErrorCode::InsufficientSpan, "points span less than half of the fitted period");
    }
    return fit;
}

/// Shannon entropy of a biased coin, in bits.
inline double binary_entropy(double p) {
    if (p <= 0 || p >= 1) {
        return 0.0;
    }
    return -p * std::log2(p) - (1 - p) * std::log2(1 - p);
}

struct SecurityReport {
    double v_zz = 0;
    double v_zz_sigma = 0;
    double v_xx = 0;
    double v_xx_sigma = 0;
    double qber_z = 0;
    double qber_x = 0;
    double chsh_s = 0;
    bool bell_violated = false;
    double key_fraction = 0;
    bool key_distillable = false;
    double sifted_rate = 0;
    double key_rate = 0;
    double f_ec = 1;
};

/// Asymptotic entanglement-based key fraction 1 - f h(e_z) - h(e_x) and the
/// CHSH value 2 sqrt(2) V of a Werner-like state.
inline SecurityReport security_metrics(double v_zz, double v_xx, double sifted_rate, double f_ec = 1.0,
                                       double v_zz_sigma = 0.0, double v_xx_sigma = 0.0) {
    for (double v : {v_zz, v_xx}) {
        if (!(v >= -1 && v <= 1)) {
            throw Error(ErrorCode::InvariantViolation, "visibility must be in [-1, 1]");
        }
    }
    if (!(sifted_rate >= 0)) {
        throw Error(ErrorCode::InvariantViolation, "sifted_rate must be >= 0");
    }
    if (!(f_ec >= 1)) {
        throw Error(ErrorCode::InvariantViolation, "f_ec must be >= 1");
    }
    SecurityReport r;
    r.v_zz = v_zz;
    r.v_xx = v_xx;
    r.v_zz_sigma = v_zz_sigma;
    r.v_xx_sigma = v_xx_sigma;
    r.qber_z = (1 - v_zz) / 2;
    r.qber_x = (1 - v_xx) / 2;
    r.chsh_s = 2 * std::numbers::sqrt2 * std::min(v_zz, v_xx);
    r.bell_violated = r.chsh_s > 2;
    r.key_fraction = std::max(0.0, 1 - f_ec * binary_entropy(r.qber_z) - binary_entropy(r.qber_x));
    r.key_distillable = r.key_fraction > 0;
    r.f_ec = f_ec;
    r.sifted_rate = sifted_rate;
    r.key_rate = sifted_rate * r.key_fraction;
    return r;
}

/// Aligned two-column rendering for terminals.
inline std::string to_text(const SecurityReport &r) {
    std::ostringstream out;
    out << std::fixed;
    auto row = [&](const char *name, const std::string &value) {
        out << std::left << std::setw(16) << name << value << "\n";
    };
    auto num = [](double v, int digits) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(digits) << v;
        return s.str();
    };
    row("V_zz", num(r.v_zz, 4) + " +/- " + num(r.v_zz_sigma, 4));
    row("V_xx", num(r.v_xx, 4) + " +/- " + num(r.v_xx_sigma, 4));
    row("QBER_z", num(r.qber_z, 4));
    row("QBER_x", num(r.qber_x, 4));
    row("CHSH S", num(r.chsh_s, 4));
    row("Bell violated", r.bell_violated ? "yes" : "no");
    row("key fraction", num(r.key_fraction, 4));
    row("distillable", r.key_distillable ? "yes" : "no");
    row("sifted rate", num(r.sifted_rate, 2) + " c/s");
    row("key rate", num(r.key_rate, 2) + " bit/s");
    return out.str();
}

}  // namespace hybridqkd
