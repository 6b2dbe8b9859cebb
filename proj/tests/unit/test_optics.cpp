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
#include <limits>
#include <numbers>

#include <gtest/gtest.h>

#include "hybridqkd.hpp"
#include "support/oracles.hpp"

using namespace hybridqkd;

namespace {

const double kInvSqrt2 = 1 / std::numbers::sqrt2;

// Single-photon Alice state |slot, pol> paired with a dummy Bob mode.
JointState alice_only(std::initializer_list<std::pair<std::pair<int, Pol>, cplx>> terms) {
    std::vector<std::pair<LabelPair, cplx>> e;
    for (auto [sp, a] : terms) {
        e.push_back({{{Party::A, sp.first, sp.second, Channel::Free}, {Party::B, 0, Pol::None, Channel::Free}}, a});
    }
    return build_state(std::span<const std::pair<LabelPair, cplx>>(e));
}

cplx amp_a(const JointState &s, int slot, Pol p, Channel c = Channel::Free) {
    return s.amplitude({Party::A, slot, p, c}, {Party::B, 0, Pol::None, Channel::Free});
}

JointState bob_only(std::initializer_list<std::pair<int, cplx>> terms) {
    std::vector<std::pair<LabelPair, cplx>> e;
    for (auto [slot, a] : terms) {
        e.push_back({{{Party::A, 0, Pol::H, Channel::AZ0}, {Party::B, slot, Pol::None, Channel::Free}}, a});
    }
    return build_state(std::span<const std::pair<LabelPair, cplx>>(e));
}

TransformerConfig ideal_transformer() {
    TransformerConfig c;
    c.excess_loss_db = 0;
    c.pm_fiber_transmission = 1;
    c.glan_extinction_ratio = std::numeric_limits<double>::infinity();
    return c;
}

}  // namespace

TEST(Polarizer, FortyFiveDegrees) {
    auto out = apply_local_map(alice_only({{{3, Pol::H}, 1.0}}), polarizer_map(45));
    EXPECT_NEAR(amp_a(out, 3, Pol::H).real(), 0.5, 1e-15);
    EXPECT_NEAR(amp_a(out, 3, Pol::V).real(), 0.5, 1e-15);
    EXPECT_NEAR(out.norm2(), 0.5, 1e-15);
}

TEST(Polarizer, ZeroAndNinety) {
    auto pass = apply_local_map(alice_only({{{0, Pol::H}, 1.0}}), polarizer_map(0));
    EXPECT_NEAR(std::abs(amp_a(pass, 0, Pol::H)), 1.0, 1e-15);
    EXPECT_EQ(pass.size(), 1u);
    auto block = apply_local_map(alice_only({{{0, Pol::H}, 1.0}}), polarizer_map(90));
    EXPECT_EQ(block.size(), 0u);
    EXPECT_EQ(block.norm2(), 0.0);
}

TEST(HalfWavePlate, TwentyTwoPointFive) {
    auto h = apply_local_map(alice_only({{{0, Pol::H}, 1.0}}), hwp_map(22.5));
    EXPECT_NEAR(amp_a(h, 0, Pol::H).real(), kInvSqrt2, 1e-15);
    EXPECT_NEAR(amp_a(h, 0, Pol::V).real(), kInvSqrt2, 1e-15);
    auto v = apply_local_map(alice_only({{{0, Pol::V}, 1.0}}), hwp_map(22.5));
    EXPECT_NEAR(amp_a(v, 0, Pol::H).real(), kInvSqrt2, 1e-15);
    EXPECT_NEAR(amp_a(v, 0, Pol::V).real(), -kInvSqrt2, 1e-15);
}

TEST(HalfWavePlate, ZeroDegreesFlipsV) {
    auto v = apply_local_map(alice_only({{{0, Pol::V}, 1.0}}), hwp_map(0));
    EXPECT_NEAR(amp_a(v, 0, Pol::V).real(), -1.0, 1e-15);
    EXPECT_NEAR(std::abs(amp_a(v, 0, Pol::H)), 0.0, 1e-15);
}

TEST(HalfWavePlate, TwiceIsIdentity) {
    for (double deg : {0.0, 13.0, 22.5, 45.0, 71.3}) {
        auto twice = compose(hwp_map(deg), hwp_map(deg));
        for (Pol in : {Pol::H, Pol::V}) {
            const auto *terms = twice.find({in, Channel::Free});
            ASSERT_NE(terms, nullptr);
            for (const auto &t : *terms) {
                double want = t.pol == in ? 1.0 : 0.0;
                EXPECT_NEAR(std::abs(t.coeff - want), 0.0, 1e-12) << deg;
            }
        }
    }
}

TEST(HalfWavePlate, MatchesJonesOracle) {
    for (double deg : {0.0, 10.0, 22.5, 33.0, 80.0}) {
        auto jm = oracle::hwp(deg * std::numbers::pi / 180);
        auto v = oracle::apply(jm, {cplx(0.6), cplx(0, 0.8)});
        auto out = apply_local_map(alice_only({{{0, Pol::H}, 0.6}, {{0, Pol::V}, cplx(0, 0.8)}}), hwp_map(deg));
        EXPECT_NEAR(std::abs(amp_a(out, 0, Pol::H) - v[0]), 0, 1e-14);
        EXPECT_NEAR(std::abs(amp_a(out, 0, Pol::V) - v[1]), 0, 1e-14);
    }
}

TEST(FormatTransformer, IdealRouting) {
    auto out = apply_local_map(alice_only({{{0, Pol::H}, 1.0}}), format_transformer_map(ideal_transformer()));
    EXPECT_NEAR(amp_a(out, 0, Pol::H).real(), 0.5, 1e-15);
    EXPECT_NEAR(amp_a(out, 1, Pol::V).real(), 0.5, 1e-15);
    EXPECT_EQ(out.size(), 2u);
}

TEST(FormatTransformer, ExcessLossScalesEveryCoefficient) {
    auto cfg = ideal_transformer();
    cfg.excess_loss_db = 1.5;
    const double g = std::pow(10.0, -0.075);
    EXPECT_NEAR(g, 0.8414, 5e-5);
    EXPECT_NEAR(g * g, 0.708, 5e-4);
    auto out = apply_local_map(alice_only({{{0, Pol::H}, 1.0}}), format_transformer_map(cfg));
    EXPECT_NEAR(amp_a(out, 0, Pol::H).real(), 0.5 * g, 1e-15);
    EXPECT_NEAR(amp_a(out, 1, Pol::V).real(), 0.5 * g, 1e-15);
}

TEST(FormatTransformer, CentralSlotCarriesEntangledPolarization) {
    // Restricted to Alice's slot 1 the pair reads |H>|late> + e^{i dt}|V>|early>.
    const double dt = 0.9;
    auto out = apply_local_map(time_bin_pair_state(dt), format_transformer_map(ideal_transformer()));
    ModeLabel ah{Party::A, 1, Pol::H, Channel::Free}, av{Party::A, 1, Pol::V, Channel::Free};
    ModeLabel late{Party::B, kLateSlot, Pol::None, Channel::Free}, early{Party::B, kEarlySlot, Pol::None, Channel::Free};
    cplx h_late = out.amplitude(ah, late);
    cplx v_early = out.amplitude(av, early);
    EXPECT_GT(std::abs(h_late), 0.1);
    EXPECT_NEAR(std::abs(v_early / h_late), 1.0, 1e-12);
    EXPECT_NEAR(std::arg(v_early / h_late), dt, 1e-12);
    EXPECT_EQ(std::abs(out.amplitude(ah, early)), 0.0);
    EXPECT_EQ(std::abs(out.amplitude(av, late)), 0.0);
}

TEST(FormatTransformer, FiniteExtinctionLeaks) {
    auto cfg = ideal_transformer();
    cfg.glan_extinction_ratio = 100;
    auto out = apply_local_map(alice_only({{{0, Pol::H}, 1.0}}), format_transformer_map(cfg));
    // The 45-degree projection feeds 1/2 into each polarization, then 10 % leaks.
    EXPECT_NEAR(amp_a(out, 0, Pol::H).real(), 0.5 * std::sqrt(0.99), 1e-15);
    EXPECT_NEAR(amp_a(out, 1, Pol::H).real(), 0.05, 1e-15);
    EXPECT_NEAR(amp_a(out, 0, Pol::V).real(), 0.05, 1e-15);
    EXPECT_NEAR(out.norm2(), 0.5, 1e-14);
}

TEST(FormatTransformer, RejectsBadConfig) {
    auto cfg = ideal_transformer();
    cfg.glan_extinction_ratio = 1;
    EXPECT_THROW(format_transformer_map(cfg), Error);
    cfg = ideal_transformer();
    cfg.pm_fiber_transmission = 1.2;
    EXPECT_THROW(format_transformer_map(cfg), Error);
}

TEST(PlcDecoder, CentralSlotFringe) {
    DecoderConfig d;
    d.z_branch_ratio = 0.5;
    d.phase_phi = 0;
    auto in = bob_only({{0, kInvSqrt2}, {1, kInvSqrt2}});
    auto p = outcome_probabilities(apply_local_map(in, plc_decoder_map(d)));
    const double r = 0.5;
    EXPECT_NEAR(p.probability({Channel::AZ0, 0, Channel::BXPlus, 1}), r / 2, 1e-15);
    EXPECT_NEAR(p.probability({Channel::AZ0, 0, Channel::BXMinus, 1}), 0.0, 1e-15);
    d.phase_phi = std::numbers::pi;
    auto q = outcome_probabilities(apply_local_map(in, plc_decoder_map(d)));
    EXPECT_NEAR(q.probability({Channel::AZ0, 0, Channel::BXPlus, 1}), 0.0, 1e-15);
    EXPECT_NEAR(q.probability({Channel::AZ0, 0, Channel::BXMinus, 1}), r / 2, 1e-15);
}

TEST(PlcDecoder, FringeMatchesPathOracle) {
    for (double branch : {0.2, 0.5, 0.7}) {
        for (double delta : {0.0, 0.4, 2.0}) {
            for (double phi : {0.0, 1.1, 3.0, 5.5}) {
                DecoderConfig d;
                d.z_branch_ratio = branch;
                d.phase_phi = phi;
                auto in = bob_only({{0, std::polar(kInvSqrt2, delta)}, {1, kInvSqrt2}});
                auto p = outcome_probabilities(apply_local_map(in, plc_decoder_map(d)));
                EXPECT_NEAR(p.probability({Channel::AZ0, 0, Channel::BXPlus, 1}),
                            oracle::fringe_plus_central(delta, phi, 1 - branch), 1e-14);
            }
        }
    }
}

TEST(PlcDecoder, LosslessAndSideSlots) {
    DecoderConfig d;
    d.z_branch_ratio = 0.3;
    auto in = bob_only({{0, 1.0}});
    auto out = apply_local_map(in, plc_decoder_map(d));
    EXPECT_NEAR(out.norm2(), 1.0, 1e-14);
    auto p = outcome_probabilities(out);
    EXPECT_NEAR(p.probability({Channel::AZ0, 0, Channel::BZdir, 0}), 0.3, 1e-15);
    EXPECT_NEAR(p.probability({Channel::AZ0, 0, Channel::BXPlus, 0}), 0.7 / 4, 1e-15);
    EXPECT_NEAR(p.probability({Channel::AZ0, 0, Channel::BXPlus, 1}), 0.7 / 4, 1e-15);
    d.insertion_loss_db = 3;
    EXPECT_NEAR(apply_local_map(in, plc_decoder_map(d)).norm2(), std::pow(10, -0.3), 1e-14);
}

TEST(PbsAnalyzer, ZBasis) {
    auto out = apply_local_map(alice_only({{{1, Pol::H}, 1.0}}), pbs_analyzer_map(Basis::Z));
    EXPECT_NEAR(std::abs(amp_a(out, 1, Pol::H, Channel::AZ0)), 1.0, 1e-15);
    auto v = apply_local_map(alice_only({{{1, Pol::V}, 1.0}}), pbs_analyzer_map(Basis::Z));
    EXPECT_NEAR(std::abs(amp_a(v, 1, Pol::V, Channel::AZ1)), 1.0, 1e-15);
}

TEST(PbsAnalyzer, XBasis) {
    auto plus = marginal_probabilities(
        apply_local_map(alice_only({{{0, Pol::H}, kInvSqrt2}, {{0, Pol::V}, kInvSqrt2}}), pbs_analyzer_map(Basis::X)),
        Party::A);
    EXPECT_NEAR((plus[{Channel::AXPlus, 0}]), 1.0, 1e-15);
    EXPECT_NEAR((plus[{Channel::AXMinus, 0}]), 0.0, 1e-15);
    auto h = marginal_probabilities(apply_local_map(alice_only({{{0, Pol::H}, 1.0}}), pbs_analyzer_map(Basis::X)),
                                    Party::A);
    EXPECT_NEAR((h[{Channel::AXPlus, 0}]), 0.5, 1e-15);
    EXPECT_NEAR((h[{Channel::AXMinus, 0}]), 0.5, 1e-15);
}

TEST(GuideDelay, HalfMetreAtGroupIndexOnePointFive) {
    EXPECT_NEAR(guide_delay_seconds(0.5, 1.5) * 1e9, 2.50, 0.01);
    EXPECT_NEAR(guide_delay_seconds(0.5, 1.5), 0.75 / kSpeedOfLight, 1e-24);
}
