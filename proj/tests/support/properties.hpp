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

// Randomized invariant checks shared by the unit tests and the acceptance
// runner. Each returns an empty string on success, otherwise a description
// of the first violation.

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "hybridqkd.hpp"
#include "support/oracles.hpp"

namespace props {

using namespace hybridqkd;

inline std::string fail(const std::string &what, double got, double want) {
    std::ostringstream o;
    o.precision(17);
    o << what << ": got " << got << ", want " << want;
    return o.str();
}

/// A valid setup with every optical parameter drawn at random.
inline ExperimentSetup random_setup(std::mt19937_64 &g) {
    std::uniform_real_distribution<double> u(0, 1);
    ExperimentSetup s = default_setup();
    s.transformer.polarizer_angle = 10 + 70 * u(g);
    s.transformer.excess_loss_db = 3 * u(g);
    s.transformer.pm_fiber_transmission = 0.5 + 0.5 * u(g);
    s.transformer.glan_extinction_ratio = std::pow(10.0, 1 + 4 * u(g));
    s.decoder.phase_phi = 2 * std::numbers::pi * u(g);
    s.decoder.z_branch_ratio = 0.1 + 0.8 * u(g);
    s.decoder.insertion_loss_db = 2 * u(g);
    s.decoder.z_port_split = 0.2 + 0.6 * u(g);
    s.alice_basis = u(g) < 0.5 ? Basis::Z : Basis::X;
    s.source.phase_mean = 2 * std::numbers::pi * u(g) - std::numbers::pi;
    s.source.phase_sigma = 0.8 * u(g);
    return s;
}

inline std::string subunitarity(std::uint64_t seed, int trials = 200) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < trials; ++i) {
        auto s = random_setup(g);
        for (const LinearMap &m :
             {polarizer_map(180 * u(g)), hwp_map(180 * u(g)), glan_router_map(s.transformer),
              format_transformer_map(s.transformer), plc_decoder_map(s.decoder), pbs_analyzer_map(Basis::Z),
              pbs_analyzer_map(Basis::X), alice_map(s)}) {
            if (!m.is_subunitary()) {
                return "map violates sub-unitarity at trial " + std::to_string(i);
            }
        }
    }
    return {};
}

inline std::string normalization(std::uint64_t seed, int trials = 100) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0, 2 * std::numbers::pi);
    for (int i = 0; i < trials; ++i) {
        auto s = random_setup(g);
        double dt = u(g);
        for (const ProbTable &t : {analytic_distribution(s, dt), pair_outcome_table(s, dt)}) {
            double sum = t.total() + t.loss_prob();
            if (std::abs(sum - 1) > 1e-12) {
                return fail("entries + loss", sum, 1);
            }
            for (const auto &[k, p] : t.entries()) {
                if (p < 0 || p > 1) {
                    return fail("probability of " + to_string(k), p, 0.5);
                }
            }
        }
    }
    return {};
}

inline std::string global_phase(std::uint64_t seed, int trials = 50) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0, 2 * std::numbers::pi);
    for (int i = 0; i < trials; ++i) {
        auto s = random_setup(g);
        JointState st = time_bin_pair_state(u(g));
        JointState rotated = scale_state(st, std::polar(1.0, u(g)));
        auto through = [&](const JointState &x) {
            return outcome_probabilities(apply_local_map(apply_local_map(x, alice_map(s)), plc_decoder_map(s.decoder)));
        };
        auto a = through(st), b = through(rotated);
        for (const auto &[k, p] : a.entries()) {
            if (std::abs(p - b.probability(k)) > 1e-12) {
                return fail("global phase changed " + to_string(k), b.probability(k), p);
            }
        }
    }
    return {};
}

inline std::string phi_periodicity(std::uint64_t seed, int trials = 50) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0, 2 * std::numbers::pi);
    for (int i = 0; i < trials; ++i) {
        auto s = random_setup(g);
        auto s2 = s;
        s2.decoder.phase_phi += 2 * std::numbers::pi;
        double dt = u(g);
        auto a = analytic_distribution(s, dt), b = analytic_distribution(s2, dt);
        for (const auto &[k, p] : a.entries()) {
            if (std::abs(p - b.probability(k)) > 1e-12) {
                return fail("phi + 2 pi changed " + to_string(k), b.probability(k), p);
            }
        }
    }
    return {};
}

/// Z conditional visibility of an ideal setup does not depend on phi.
inline double z_conditional_visibility(const ProbTable &t) {
    double same = t.probability({Channel::AZ0, 1, Channel::BZdir, 1}) + t.probability({Channel::AZ1, 1, Channel::BZdir, 0});
    double cross = t.probability({Channel::AZ0, 1, Channel::BZdir, 0}) + t.probability({Channel::AZ1, 1, Channel::BZdir, 1});
    return (same - cross) / (same + cross);
}

inline double x_conditional_visibility(const ProbTable &t) {
    auto p = [&](Channel a, Channel b) { return t.probability({a, 1, b, 1}); };
    double same = p(Channel::AXPlus, Channel::BXPlus) + p(Channel::AXMinus, Channel::BXMinus);
    double cross = p(Channel::AXPlus, Channel::BXMinus) + p(Channel::AXMinus, Channel::BXPlus);
    return (same - cross) / (same + cross);
}

inline std::string z_visibility_phi_independent() {
    auto s = ideal_setup();
    double ref = z_conditional_visibility(analytic_distribution(s, 0.4));
    for (int i = 0; i < 32; ++i) {
        s.decoder.phase_phi = 2 * std::numbers::pi * i / 32;
        double v = z_conditional_visibility(analytic_distribution(s, 0.4));
        if (std::abs(v - ref) > 1e-9) {
            return fail("Z visibility at phi index " + std::to_string(i), v, ref);
        }
    }
    return {};
}

inline ExperimentSetup busy_setup() {
    auto s = default_setup();
    s.transformer.glan_extinction_ratio = 50;
    s.source.phase_sigma = 0.4;
    s.source.pair_rate_mu = 1e6;
    s.chunk_duration = 0.01;
    return s;
}

inline std::string seed_determinism() {
    auto s = busy_setup();
    std::vector<ClickEvent> c1, c2, c3;
    auto a = run_montecarlo(s, 0.1, 11, {.threads = 1, .keep_clicks = true}, &c1);
    auto b = run_montecarlo(s, 0.1, 11, {.threads = 1, .keep_clicks = true}, &c2);
    auto c = run_montecarlo(s, 0.1, 11, {.threads = 3, .keep_clicks = true}, &c3);
    if (!(a == b) || c1 != c2) {
        return "identical seeds gave different runs";
    }
    if (!(a == c) || c1 != c3) {
        return "thread count changed the run";
    }
    auto d = run_montecarlo(s, 0.1, 12);
    if (a == d) {
        return "different seeds gave identical runs";
    }
    return {};
}

inline std::string merge_associativity() {
    auto s = busy_setup();
    const double duration = 0.1;
    PairSamplerCache cache(s);
    auto whole = run_chunks(s, cache, duration, 5, 0, 10);
    auto left = run_chunks(s, cache, duration, 5, 0, 4);
    auto right = run_chunks(s, cache, duration, 5, 4, 10);
    auto mid = run_chunks(s, cache, duration, 5, 4, 7);
    auto tail = run_chunks(s, cache, duration, 5, 7, 10);
    RunRecord a = left;
    a.merge(right);
    RunRecord b = left;  // (left + mid) + tail
    b.merge(mid);
    b.merge(tail);
    RunRecord c = mid;  // left + (mid + tail), merged in the other order
    c.merge(tail);
    RunRecord c2 = left;
    c2.merge(c);
    RunRecord d = right;  // commutativity
    d.merge(left);
    if (!(a == whole) || !(b == whole) || !(c2 == whole) || !(d == whole)) {
        return "chunk merge differs from the monolithic run";
    }
    if (whole.histogram.total() != whole.coincidence_total()) {
        return "histogram total differs from the coincidence total";
    }
    return {};
}

inline std::string visibility_properties(std::uint64_t seed, int trials = 500) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0, 1e4);
    for (int i = 0; i < trials; ++i) {
        double a = u(g), b = u(g);
        auto x = visibility(a, b), y = visibility(b, a);
        if (x.value != -y.value) {
            return fail("antisymmetry", x.value, -y.value);
        }
        auto z = visibility(100 * a, 100 * b);
        if (std::abs(z.sigma * 10 - x.sigma) > 1e-12 * x.sigma) {
            return fail("sigma scaling", z.sigma * 10, x.sigma);
        }
    }
    return {};
}

inline std::string key_fraction_properties() {
    const int n = 200;
    for (int i = 0; i <= n; ++i) {
        double ez = 0.5 * i / n;
        double prev = 2;
        for (int j = 0; j <= n; ++j) {
            double ex = 0.5 * j / n;
            double k = security_metrics(1 - 2 * ez, 1 - 2 * ex, 1).key_fraction;
            if (k > prev + 1e-15) {
                return fail("key fraction rises in qber_x", k, prev);
            }
            prev = k;
            double kz = security_metrics(1 - 2 * std::min(0.5, ez + 0.5 / n), 1 - 2 * ex, 1).key_fraction;
            if (kz > k + 1e-15) {
                return fail("key fraction rises in qber_z", kz, k);
            }
        }
    }
    // Zero crossing in the symmetric case, against a bisection root.
    double root = oracle::half_entropy_root();
    if (std::abs(root - 0.1100) > 5e-5) {
        return fail("h(e) = 1/2 root", root, 0.1100);
    }
    double just_below = security_metrics(1 - 2 * (root - 1e-6), 1 - 2 * (root - 1e-6), 1).key_fraction;
    double at = security_metrics(1 - 2 * root, 1 - 2 * root, 1).key_fraction;
    double above = security_metrics(1 - 2 * (root + 1e-6), 1 - 2 * (root + 1e-6), 1).key_fraction;
    if (!(just_below > 0) || at > 1e-9 || above != 0) {
        return fail("key fraction around the root", at, 0);
    }
    for (double e = root + 1e-6; e <= 0.5; e += 0.01) {
        if (security_metrics(1 - 2 * e, 1 - 2 * e, 1).key_fraction != 0) {
            return fail("key fraction beyond the root", e, 0);
        }
    }
    return {};
}

inline std::string chsh_equivalence(std::uint64_t seed, int trials = 2000) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < trials; ++i) {
        double a = u(g), b = u(g);
        if (i % 4 == 0) {
            a = 1 / std::numbers::sqrt2;
        }
        auto r = security_metrics(a, b, 1);
        if ((r.chsh_s > 2) != r.bell_violated) {
            return fail("chsh_s > 2 vs bell_violated", r.chsh_s, 2);
        }
        if ((std::min(a, b) > 1 / std::numbers::sqrt2) != r.bell_violated) {
            return fail("min V > 1/sqrt2 vs bell_violated", std::min(a, b), 1 / std::numbers::sqrt2);
        }
    }
    return {};
}

inline std::string detect_properties(std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<Arrival> arr;
    double t = 0;
    for (std::uint64_t i = 0; i < 20000; ++i) {
        t += 1e-6 * u(g);
        arr.push_back({i % 2 ? Channel::AZ0 : Channel::AZ1, t, i});
    }
    DetectorBank bank{{Channel::AZ0, spcm_defaults()}, {Channel::AZ1, spcm_defaults()}};
    bank[Channel::AZ0].dark_rate = 5e4;
    auto clicks = detect(arr, bank, nullptr, 0, t, seed);
    std::size_t photons = 0;
    for (std::size_t i = 0; i < clicks.size(); ++i) {
        photons += clicks[i].origin == Origin::Photon;
        if (i > 0 && clicks[i].time < clicks[i - 1].time) {
            return "detect output not time-sorted";
        }
    }
    if (photons > arr.size()) {
        return "detect increased the photon count";
    }
    if (clicks.size() == photons) {
        return "no dark-labelled clicks despite a dark rate";
    }
    return {};
}

/// Moving the coincidence reference by d is the same as moving the other
/// party's clicks by -d via its channel offset.
inline std::string coincidence_symmetry(std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<ClickEvent> a, b;
    double ta = 0, tb = 0;
    for (int i = 0; i < 3000; ++i) {
        ta += 50e-9 * u(g);
        a.push_back({u(g) < 0.5 ? Channel::AZ0 : Channel::AZ1, ta, Origin::Photon});
        tb += 50e-9 * u(g);
        b.push_back({u(g) < 0.5 ? Channel::BZ0 : Channel::BZ1, tb, Origin::Photon});
    }
    CoincidenceConfig c;
    for (double d : {-7e-9, 3e-9, 12.5e-9}) {
        auto x = coincidences(a, b, c, d);
        CoincidenceConfig c1 = c;
        for (Channel ch : {Channel::BZ0, Channel::BZ1}) {
            c1.channel_offsets[ch] = -d;
        }
        auto y = coincidences(a, b, c1, 0.0);
        CoincidenceConfig c2 = c;
        for (Channel ch : {Channel::AZ0, Channel::AZ1}) {
            c2.channel_offsets[ch] = d;
        }
        auto z = coincidences(a, b, c2, 0.0);
        if (x.counts != y.counts || x.counts != z.counts) {
            return "scan delay and channel offsets disagree at d = " + std::to_string(d);
        }
    }
    return {};
}

inline std::string config_roundtrip(std::uint64_t seed, int trials = 50) {
    std::mt19937_64 g(seed);
    for (int i = 0; i < trials; ++i) {
        auto s = random_setup(g);
        auto text = serialize_config(s);
        auto back = parse_config_text(text);
        if (serialize_config(back) != text) {
            return "config round trip changed the text";
        }
    }
    return {};
}

}  // namespace props
