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

#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "hybridqkd.hpp"
#include "support/oracles.hpp"
#include "support/properties.hpp"

using namespace hybridqkd;

namespace {

double z_visibility(const RunRecord &r) {
    double same = 0, cross = 0;
    for (auto p : same_pairs(Basis::Z)) {
        same += static_cast<double>(r.count(p.alice, p.bob));
    }
    for (auto p : cross_pairs(Basis::Z)) {
        cross += static_cast<double>(r.count(p.alice, p.bob));
    }
    return visibility(same, cross).value;
}

std::vector<std::pair<double, double>> pair_curve(const Curve &c, ChannelPair p) {
    return curve_sum(c, {p});
}

}  // namespace

TEST(AnalyticDistribution, IdealConditionalVisibilitiesAreOne) {
    auto s = ideal_setup();
    for (double dt : {0.0, 0.5, 2.0, -1.3}) {
        EXPECT_NEAR(props::z_conditional_visibility(analytic_distribution(s, dt)), 1.0, 1e-9);
    }
    s.alice_basis = Basis::X;
    s.decoder.phase_phi = 0;
    EXPECT_NEAR(props::x_conditional_visibility(analytic_distribution(s, 0.0)), 1.0, 1e-9);
}

TEST(AnalyticDistribution, IdealZPeaksAreCorrelated) {
    auto t = analytic_distribution(ideal_setup(), 0.3);
    double a = t.probability({Channel::AZ0, 1, Channel::BZdir, 1});
    double b = t.probability({Channel::AZ1, 1, Channel::BZdir, 0});
    EXPECT_GT(a, 0);
    EXPECT_NEAR(a, b, 1e-15);
    EXPECT_EQ(t.probability({Channel::AZ0, 1, Channel::BZdir, 0}), 0.0);
}

TEST(AnalyticDistribution, Invariants) {
    EXPECT_EQ(props::subunitarity(81), "");
    EXPECT_EQ(props::normalization(82), "");
    EXPECT_EQ(props::phi_periodicity(83), "");
    EXPECT_EQ(props::z_visibility_phi_independent(), "");
}

TEST(AnalyticDistribution, XFringeClosedForm) {
    // Central-slot contrast is 2t/(1+t^2) from the loop transmission, damped
    // by the phase-noise factor; extinction leaks cancel in the ratio.
    std::mt19937_64 g(84);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 40; ++i) {
        auto s = default_setup();
        s.alice_basis = Basis::X;
        s.transformer.pm_fiber_transmission = 0.5 + 0.5 * u(g);
        s.transformer.glan_extinction_ratio = std::pow(10, 1 + 5 * u(g));
        s.decoder.z_branch_ratio = 0.2 + 0.6 * u(g);
        double sigma = 1.5 * u(g);
        double t = s.transformer.pm_fiber_transmission;
        double want = std::exp(-sigma * sigma / 2) * 2 * t / (1 + t * t);
        PhaseResolvedModel model(s);
        EXPECT_NEAR(props::x_conditional_visibility(model.averaged_distribution(0, sigma)), want, 1e-3);
    }
}

TEST(PhaseResolvedModel, MatchesDirectPropagation) {
    std::mt19937_64 g(85);
    std::uniform_real_distribution<double> u(0, 1);
    for (int i = 0; i < 20; ++i) {
        auto s = props::random_setup(g);
        PhaseResolvedModel model(s);
        double dt = 6 * u(g);
        auto direct = analytic_distribution(s, dt);
        auto fast = model.distribution(dt);
        for (const auto &[k, p] : direct.entries()) {
            EXPECT_NEAR(fast.probability(k), p, 1e-12) << to_string(k);
        }
        EXPECT_NEAR(fast.loss_prob(), direct.loss_prob(), 1e-12);
    }
}

TEST(PhaseResolvedModel, GaussianAverageMatchesQuadrature) {
    auto s = default_setup();
    s.alice_basis = Basis::X;
    s.transformer.glan_extinction_ratio = 40;
    s.decoder.phase_phi = 0.8;
    PhaseResolvedModel model(s);
    const double mean = 0.3, sigma = 0.6;
    auto avg = model.averaged_distribution(mean, sigma);
    for (const auto &k : model.keys()) {
        double want = oracle::gaussian_average(
            [&](double x) { return analytic_distribution(s, x).probability(k); }, mean, sigma, 801);
        EXPECT_NEAR(avg.probability(k), want, 1e-7) << to_string(k);
    }
}

TEST(StationaryPairTable, PreservesSinglesMarginals) {
    std::mt19937_64 g(86);
    for (int i = 0; i < 20; ++i) {
        auto s = props::random_setup(g);
        auto table = pair_outcome_table(s, 0.4);
        std::map<Channel, double> alice;
        double bob = 0;
        for (const auto &[k, p] : table.entries()) {
            ASSERT_GE(p, 0);
            if (k.alice != Channel::Lost) {
                EXPECT_EQ(k.slot_a, kAliceReferenceSlot);
                alice[k.alice] += p;
            }
            if (k.bob != Channel::Lost) {
                bob += p;
            }
        }
        std::map<Channel, double> want_a;
        for (const auto &[k, p] : alice_marginal(s)) {
            want_a[k.first] += p;
        }
        for (const auto &[c, p] : want_a) {
            EXPECT_NEAR(alice[c], p, 1e-12) << channel_name(c);
        }
        double want_b = 0;
        for (const auto &[k, p] : bob_marginal(s)) {
            want_b += p;
        }
        EXPECT_NEAR(bob, want_b, 1e-12);
    }
}

TEST(RunMontecarlo, IdealZHasNoWrongPairings) {
    auto s = ideal_setup();
    s.source.pair_rate_mu = 1e4;
    auto r = run_montecarlo(s, 2.0, 87);
    EXPECT_GT(r.coincidence_total(), 1000u);
    EXPECT_GE(z_visibility(r), 0.999);
}

TEST(RunMontecarlo, RatesMatchExpectation) {
    auto s = default_setup();
    s.source.pair_rate_mu = 5e5;
    auto r = run_montecarlo(s, 4.0, 88);
    auto want = expected_rates(s);
    for (const auto &[p, rate] : want) {
        double n = static_cast<double>(r.count(p.alice, p.bob));
        double mean = rate * r.duration;
        // Accidentals are modelled to first order; allow 4 sigma plus 2 %.
        EXPECT_NEAR(n, mean, 4 * std::sqrt(mean + 1) + 0.02 * mean) << pair_name(p);
    }
    EXPECT_EQ(r.pairs > 0, true);
    EXPECT_NEAR(static_cast<double>(r.pairs), 5e5 * 4.0, 3 * std::sqrt(2e6));
}

TEST(RunMontecarlo, DeterminismAndMerging) {
    EXPECT_EQ(props::seed_determinism(), "");
    EXPECT_EQ(props::merge_associativity(), "");
}

TEST(RunMontecarlo, AccidentalsDegradeVisibility) {
    // Z visibility falls as more pairs share each gate.
    auto s = default_setup();
    s.transformer.glan_extinction_ratio = 1e9;
    double prev = 2, prev_sigma = 0;
    for (double mu : {2e5, 1e6, 3e6, 6e6, 1e7}) {
        s.source.pair_rate_mu = mu;
        s.chunk_duration = 0.01;
        auto r = run_montecarlo(s, 2e6 / mu, 89);
        double same = 0, cross = 0;
        for (auto p : same_pairs(Basis::Z)) {
            same += static_cast<double>(r.count(p.alice, p.bob));
        }
        for (auto p : cross_pairs(Basis::Z)) {
            cross += static_cast<double>(r.count(p.alice, p.bob));
        }
        auto v = visibility(same, cross);
        EXPECT_LT(v.value, prev) << mu;
        EXPECT_GT(prev - v.value, -3 * std::hypot(v.sigma, prev_sigma));
        prev = v.value;
        prev_sigma = v.sigma;
    }
}

TEST(RunMontecarlo, RejectsBadInput) {
    auto s = default_setup();
    EXPECT_THROW(run_montecarlo(s, 0.0, 1), Error);
    s.detectors.erase(Channel::BXMinus);
    EXPECT_THROW(run_montecarlo(s, 0.1, 1), Error);
    s = default_setup();
    s.detectors[Channel::BZ0].gate_width = 3e-9;
    EXPECT_THROW(run_montecarlo(s, 0.1, 1), Error);
}

TEST(ScanDelay, CorrelatedPeaksAlign) {
    auto s = ideal_setup();
    s.source.pair_rate_mu = 2e5;
    auto c = scan_delay(s, scan_grid(-5e-9, 5e-9, 0.25e-9), 0.05, 90);
    auto argmax = [](const std::vector<std::pair<double, double>> &v) {
        return std::max_element(v.begin(), v.end(), [](auto a, auto b) { return a.second < b.second; })->first;
    };
    double z0 = argmax(pair_curve(c, {Channel::AZ0, Channel::BZ0}));
    double z1 = argmax(pair_curve(c, {Channel::AZ1, Channel::BZ1}));
    EXPECT_NEAR(z0, z1, 1e-15);
    EXPECT_NEAR(z0, 0.0, 0.25e-9);
    // Wrong pairings have no peak at the correlated delay, only stray accidentals.
    double peak = 0;
    for (auto [x, y] : pair_curve(c, {Channel::AZ0, Channel::BZ0})) {
        peak = std::max(peak, y);
    }
    for (auto [x, y] : pair_curve(c, {Channel::AZ0, Channel::BZ1})) {
        if (std::abs(x) < 1e-12) {
            EXPECT_LE(y, 0.01 * peak);
        }
    }
}

TEST(ScanTemperature, IdealFringe) {
    auto s = ideal_setup();
    s.source.pair_rate_mu = 1e5;
    std::vector<double> temps;
    for (int i = 0; i < 16; ++i) {
        temps.push_back(s.temperature.period_k * i / 12);
    }
    auto c = scan_temperature(s, temps, 0.5, 91);
    auto pp = fit_fringe(pair_curve(c, {Channel::AXPlus, Channel::BXPlus}), s.temperature.period_k);
    auto pm = fit_fringe(pair_curve(c, {Channel::AXPlus, Channel::BXMinus}), s.temperature.period_k);
    EXPECT_NEAR(pp.visibility, 1.0, 3 * pp.visibility_sigma + 1e-3);
    EXPECT_NEAR(pm.visibility, 1.0, 3 * pm.visibility_sigma + 1e-3);
    double shift = std::remainder(pp.phase - pm.phase, 2 * std::numbers::pi);
    EXPECT_NEAR(std::abs(shift), std::numbers::pi, 0.05);
    // One period apart: points 0 and 12 share phi.
    auto v = pair_curve(c, {Channel::AXPlus, Channel::BXPlus});
    double a = v[0].second, b = v[12].second;
    EXPECT_NEAR(a, b, 4 * std::sqrt(a + b));
}

TEST(ScanGrid, Inclusive) {
    auto g = scan_grid(-1, 1, 0.5);
    EXPECT_EQ(g.size(), 5u);
    EXPECT_EQ(g.front(), -1);
    EXPECT_EQ(g.back(), 1);
    EXPECT_THROW(scan_grid(0, 1, 0), Error);
    EXPECT_THROW(scan_grid(1, 0, 0.1), Error);
}

TEST(Metrics, ExpectedMatchesMeasuredForDefaults) {
    auto s = default_setup();
    s.transformer.glan_extinction_ratio = 60;
    s.source.phase_sigma = 0.5;
    MetricPlan plan{5.0, 10, 1.0};
    auto e = expected_metrics(s, plan);
    auto m = measure_metrics(s, plan, 92);
    EXPECT_NEAR(m.v_zz, e.v_zz, 4 * m.v_zz_sigma);
    EXPECT_NEAR(m.v_xx, e.v_xx, 4 * m.v_xx_sigma);
    EXPECT_NEAR(m.r_z, e.r_z, 4 * m.r_z_sigma + 0.02 * e.r_z);
    EXPECT_NEAR(m.r_x, e.r_x, 4 * m.r_x_sigma + 0.02 * e.r_x);
}
