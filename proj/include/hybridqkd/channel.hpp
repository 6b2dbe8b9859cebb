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

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "hybridqkd/error.hpp"

namespace hybridqkd {

enum class Party : std::uint8_t { A, B };

enum class Pol : std::uint8_t { H, V, None };

enum class Basis : std::uint8_t { Z, X };

/// Detector ports. `Free` marks a photon that has not reached analysis optics;
/// `Lost` only appears in outcome tables for a party whose photon vanished.
/// `BZdir` is the direct (time-measurement) branch of Bob's decoder; the
/// detection layer splits it onto the two physical detectors `BZ0` and `BZ1`.
enum class Channel : std::uint8_t { Free, AZ0, AZ1, AXPlus, AXMinus, BZdir, BZ0, BZ1, BXPlus, BXMinus, Lost };

inline constexpr std::array<Channel, 11> kAllChannels{
    Channel::Free, Channel::AZ0,    Channel::AZ1, Channel::AXPlus, Channel::AXMinus, Channel::BZdir,
    Channel::BZ0,  Channel::BZ1,    Channel::BXPlus, Channel::BXMinus, Channel::Lost};

/// Channels that own a physical detector.
inline constexpr std::array<Channel, 8> kDetectorChannels{Channel::AZ0, Channel::AZ1, Channel::AXPlus, Channel::AXMinus,
                                                          Channel::BZ0, Channel::BZ1, Channel::BXPlus, Channel::BXMinus};

constexpr std::string_view channel_name(Channel c) {
    switch (c) {
        case Channel::Free: return "free";
        case Channel::AZ0: return "A.Z0";
        case Channel::AZ1: return "A.Z1";
        case Channel::AXPlus: return "A.X+";
        case Channel::AXMinus: return "A.X-";
        case Channel::BZdir: return "B.Zdir";
        case Channel::BZ0: return "B.Z0";
        case Channel::BZ1: return "B.Z1";
        case Channel::BXPlus: return "B.X+";
        case Channel::BXMinus: return "B.X-";
        case Channel::Lost: return "lost";
    }
    return "?";
}

inline std::optional<Channel> parse_channel(std::string_view name) {
    for (Channel c : kAllChannels) {
        if (channel_name(c) == name) {
            return c;
        }
    }
    return std::nullopt;
}

inline Channel channel_from_name(std::string_view name) {
    auto c = parse_channel(name);
    if (!c) {
        throw Error(ErrorCode::ParseError, "unknown channel '" + std::string(name) + "'");
    }
    return *c;
}

/// Owning party of a detector port; empty for `Free` and `Lost`.
constexpr std::optional<Party> channel_party(Channel c) {
    switch (c) {
        case Channel::AZ0:
        case Channel::AZ1:
        case Channel::AXPlus:
        case Channel::AXMinus: return Party::A;
        case Channel::BZdir:
        case Channel::BZ0:
        case Channel::BZ1:
        case Channel::BXPlus:
        case Channel::BXMinus: return Party::B;
        default: return std::nullopt;
    }
}

constexpr std::string_view party_name(Party p) {
    return p == Party::A ? "A" : "B";
}

constexpr std::string_view pol_name(Pol p) {
    switch (p) {
        case Pol::H: return "H";
        case Pol::V: return "V";
        case Pol::None: return "-";
    }
    return "?";
}

constexpr std::string_view basis_name(Basis b) {
    return b == Basis::Z ? "Z" : "X";
}

/// Alice's two detector ports for an analysis basis.
constexpr std::array<Channel, 2> alice_channels(Basis b) {
    return b == Basis::Z ? std::array{Channel::AZ0, Channel::AZ1} : std::array{Channel::AXPlus, Channel::AXMinus};
}

/// Bob's two detectors that report in the same basis.
constexpr std::array<Channel, 2> bob_channels(Basis b) {
    return b == Basis::Z ? std::array{Channel::BZ0, Channel::BZ1} : std::array{Channel::BXPlus, Channel::BXMinus};
}

struct ChannelPair {
    Channel alice;
    Channel bob;
    auto operator<=>(const ChannelPair &) const = default;
};

inline std::string pair_name(ChannelPair p) {
    return std::string(channel_name(p.alice)) + ":" + std::string(channel_name(p.bob));
}

inline ChannelPair parse_pair_name(std::string_view s) {
    auto colon = s.find(':');
    if (colon == std::string_view::npos) {
        throw Error(ErrorCode::ParseError, "channel pair '" + std::string(s) + "' lacks ':'");
    }
    return {channel_from_name(s.substr(0, colon)), channel_from_name(s.substr(colon + 1))};
}

/// True when both ports read out in the same basis and carry the same bit
/// value (Z0-Z0, Z1-Z1, X+-X+, X--X-).
constexpr bool is_correlated_pair(ChannelPair p) {
    return (p.alice == Channel::AZ0 && p.bob == Channel::BZ0) || (p.alice == Channel::AZ1 && p.bob == Channel::BZ1) ||
           (p.alice == Channel::AXPlus && p.bob == Channel::BXPlus) ||
           (p.alice == Channel::AXMinus && p.bob == Channel::BXMinus);
}

constexpr std::optional<Basis> pair_basis(ChannelPair p) {
    auto is_z = [](Channel c) { return c == Channel::AZ0 || c == Channel::AZ1 || c == Channel::BZ0 || c == Channel::BZ1; };
    auto is_x = [](Channel c) {
        return c == Channel::AXPlus || c == Channel::AXMinus || c == Channel::BXPlus || c == Channel::BXMinus;
    };
    if (is_z(p.alice) && is_z(p.bob)) {
        return Basis::Z;
    }
    if (is_x(p.alice) && is_x(p.bob)) {
        return Basis::X;
    }
    return std::nullopt;
}

}  // namespace hybridqkd
