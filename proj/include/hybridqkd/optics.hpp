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
#include <limits>
#include <numbers>
#include <string>

#include "hybridqkd/error.hpp"
#include "hybridqkd/mode_state.hpp"

namespace hybridqkd {

inline constexpr double kSpeedOfLight = 2.99792458e8;

inline double deg_to_rad(double deg) {
    return deg * std::numbers::pi / 180.0;
}

/// Power loss in dB as an amplitude factor.
inline double db_to_amplitude(double db) {
    return std::pow(10.0, -db / 20.0);
}

/// Alice's time-to-polarization converter: a linear polarizer followed by a
/// Glan-prism interferometer whose reflected arm is a PM-fiber delay loop.
struct TransformerConfig {
    double polarizer_angle = 45.0;  // degrees
    double excess_loss_db = 1.5;
    double pm_fiber_transmission = 1.0;  // amplitude factor
    double glan_extinction_ratio = 1e6;  // power ratio; infinity is ideal
    int delay_slots = 1;

    void validate() const {
        if (!(excess_loss_db >= 0) || !std::isfinite(excess_loss_db)) {
            throw Error(ErrorCode::InvariantViolation, "transformer.excess_loss_db must be finite and >= 0");
        }
        if (!(pm_fiber_transmission > 0 && pm_fiber_transmission <= 1)) {
            throw Error(ErrorCode::InvariantViolation, "transformer.pm_fiber_transmission must be in (0, 1]");
        }
        if (!(glan_extinction_ratio > 1)) {
            throw Error(ErrorCode::InvariantViolation, "transformer.glan_extinction_ratio must exceed 1");
        }
        if (!std::isfinite(polarizer_angle)) {
            throw Error(ErrorCode::InvariantViolation, "transformer.polarizer_angle must be finite");
        }
        if (delay_slots != 1) {
            throw Error(ErrorCode::InvariantViolation, "transformer.delay_slots must be 1 (one AMZI period)");
        }
    }

    /// Amplitude leaked into the wrong Glan port.
    double leakage() const {
        return std::isinf(glan_extinction_ratio) ? 0.0 : 1.0 / std::sqrt(glan_extinction_ratio);
    }
};

/// Bob's planar-lightwave-circuit decoder: a splitter feeding a direct
/// branch (time measurement, Z) and an AMZI with two outputs (X+ / X-).
struct DecoderConfig {
    double phase_phi = 0.0;       // AMZI relative phase, radians
    double z_branch_ratio = 0.5;  // power fraction sent to the direct branch
    int delay_slots = 1;
    double insertion_loss_db = 0.0;
    double z_port_split = 0.5;  // fraction of direct-branch photons reaching detector B.Z0

    void validate() const {
        if (!(z_branch_ratio >= 0 && z_branch_ratio <= 1)) {
            throw Error(ErrorCode::InvariantViolation, "decoder.z_branch_ratio must be in [0, 1]");
        }
        if (!(z_port_split >= 0 && z_port_split <= 1)) {
            throw Error(ErrorCode::InvariantViolation, "decoder.z_port_split must be in [0, 1]");
        }
        if (!(insertion_loss_db >= 0) || !std::isfinite(insertion_loss_db)) {
            throw Error(ErrorCode::InvariantViolation, "decoder.insertion_loss_db must be finite and >= 0");
        }
        if (!std::isfinite(phase_phi)) {
            throw Error(ErrorCode::InvariantViolation, "decoder.phase_phi must be finite");
        }
        if (delay_slots != 1) {
            throw Error(ErrorCode::InvariantViolation, "decoder.delay_slots must be 1 (one AMZI period)");
        }
    }
};

/// Projects onto the transmission axis at `angle_deg` from H and re-expresses
/// the transmitted photon in the H/V basis.
inline LinearMap polarizer_map(double angle_deg) {
    double c = std::cos(deg_to_rad(angle_deg));
    double s = std::sin(deg_to_rad(angle_deg));
    return LinearMap(Party::A, {
                                   {{Pol::H, Channel::Free}, {{0, Pol::H, Channel::Free, c * c}, {0, Pol::V, Channel::Free, c * s}}},
                                   {{Pol::V, Channel::Free}, {{0, Pol::H, Channel::Free, s * c}, {0, Pol::V, Channel::Free, s * s}}},
                               });
}

/// Half-wave plate with fast axis at `angle_deg`; Jones matrix
/// [[cos 2t, sin 2t], [sin 2t, -cos 2t]].
inline LinearMap hwp_map(double angle_deg) {
    double c = std::cos(2 * deg_to_rad(angle_deg));
    double s = std::sin(2 * deg_to_rad(angle_deg));
    return LinearMap(Party::A, {
                                   {{Pol::H, Channel::Free}, {{0, Pol::H, Channel::Free, c}, {0, Pol::V, Channel::Free, s}}},
                                   {{Pol::V, Channel::Free}, {{0, Pol::H, Channel::Free, s}, {0, Pol::V, Channel::Free, -c}}},
                               });
}

/// The Glan-prism interferometer on its own: H is transmitted in place, V is
/// reflected into the delay loop. A finite extinction ratio routes amplitude
/// `leakage()` of each polarization into the other arm.
inline LinearMap glan_router_map(const TransformerConfig &cfg) {
    double eps = cfg.leakage();
    double keep = std::sqrt(1 - eps * eps);
    double t = cfg.pm_fiber_transmission;
    int d = cfg.delay_slots;
    return LinearMap(Party::A, {
                                   {{Pol::H, Channel::Free}, {{0, Pol::H, Channel::Free, keep}, {d, Pol::H, Channel::Free, eps * t}}},
                                   {{Pol::V, Channel::Free}, {{d, Pol::V, Channel::Free, keep * t}, {0, Pol::V, Channel::Free, eps}}},
                               });
}

/// Polarizer, Glan interferometer and the aggregate excess loss of the
/// converter as one map.
inline LinearMap format_transformer_map(const TransformerConfig &cfg) {
    cfg.validate();
    return compose(polarizer_map(cfg.polarizer_angle), glan_router_map(cfg)).scaled(db_to_amplitude(cfg.excess_loss_db));
}

/// Bob's decoder. The AMZI output X+ (X-) sees the short arm at the input slot
/// and the long arm one slot later with phase +e^{i phi} (-e^{i phi}).
inline LinearMap plc_decoder_map(const DecoderConfig &cfg) {
    cfg.validate();
    double loss = db_to_amplitude(cfg.insertion_loss_db);
    double r = 1 - cfg.z_branch_ratio;
    double direct = std::sqrt(cfg.z_branch_ratio) * loss;
    double arm = 0.5 * std::sqrt(r) * loss;
    cplx late = std::polar(arm, cfg.phase_phi);
    int d = cfg.delay_slots;
    return LinearMap(Party::B, {{{Pol::None, Channel::Free},
                                 {{0, Pol::None, Channel::BZdir, direct},
                                  {0, Pol::None, Channel::BXPlus, arm},
                                  {d, Pol::None, Channel::BXPlus, late},
                                  {0, Pol::None, Channel::BXMinus, arm},
                                  {d, Pol::None, Channel::BXMinus, -late}}}});
}

/// Alice's polarization analyzer. Z: PBS straight onto A.Z0 (H) / A.Z1 (V).
/// X: a half-wave plate at 22.5 degrees in front of the same PBS, so |+45>
/// lands on A.X+ and |-45> on A.X-.
inline LinearMap pbs_analyzer_map(Basis basis) {
    LinearMap pbs(Party::A, {
                                {{Pol::H, Channel::Free}, {{0, Pol::H, basis == Basis::Z ? Channel::AZ0 : Channel::AXPlus, 1.0}}},
                                {{Pol::V, Channel::Free}, {{0, Pol::V, basis == Basis::Z ? Channel::AZ1 : Channel::AXMinus, 1.0}}},
                            });
    if (basis == Basis::Z) {
        return pbs;
    }
    return compose(hwp_map(22.5), pbs);
}

/// Delay of a waveguide of `length_m` at group index `group_index`.
inline double guide_delay_seconds(double length_m, double group_index) {
    return length_m * group_index / kSpeedOfLight;
}

}  // namespace hybridqkd
