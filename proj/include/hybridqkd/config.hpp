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

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "hybridqkd/channel.hpp"
#include "hybridqkd/error.hpp"
#include "hybridqkd/experiment.hpp"

namespace hybridqkd {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

inline std::optional<double> parse_double(std::string_view s) {
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    double v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
        return std::nullopt;
    }
    return v;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    auto issp = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && issp(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && issp(s.back())) {
        s.remove_suffix(1);
    }
    return s;
}

struct ConfigEntry {
    std::string key;
    std::string value;
    int line;
};

inline double number_value(const ConfigEntry &e) {
    auto v = parse_double(e.value);
    if (!v) {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(e.line) + ": '" + e.value + "' is not a number (" + e.key + ")");
    }
    return *v;
}

inline int int_value(const ConfigEntry &e) {
    double v = number_value(e);
    if (v != std::floor(v) || std::abs(v) > 1e9) {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(e.line) + ": '" + e.value + "' is not an integer (" + e.key + ")");
    }
    return static_cast<int>(v);
}

inline bool bool_value(const ConfigEntry &e) {
    if (e.value == "true" || e.value == "1") {
        return true;
    }
    if (e.value == "false" || e.value == "0") {
        return false;
    }
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(e.line) + ": '" + e.value + "' is not a boolean (" + e.key + ")");
}

inline bool set_detector_field(DetectorConfig &d, std::string_view field, const ConfigEntry &e) {
    if (field == "efficiency") {
        d.efficiency = number_value(e);
    } else if (field == "dark_rate") {
        d.dark_rate = number_value(e);
    } else if (field == "jitter_sigma") {
        d.jitter_sigma = number_value(e);
    } else if (field == "dead_time") {
        d.dead_time = number_value(e);
    } else if (field == "gated") {
        d.gated = bool_value(e);
    } else if (field == "gate_width") {
        d.gate_width = number_value(e);
    } else {
        return false;
    }
    return true;
}

}  // namespace detail

/// Parses `section.key = value` lines over the defaults. Party-wide detector
/// keys (detectors.A.*, detectors.B.*) apply before per-channel ones
/// (detectors.A.Z0.*) whatever their order in the file. Unless given
/// explicitly, offset.B.Z1 follows source.bin_separation_tau.
inline ExperimentSetup parse_config_text(std::string_view text) {
    std::vector<detail::ConfigEntry> entries;
    std::map<std::string, int> seen;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        std::string key(detail::trim(line.substr(0, eq)));
        std::string value(detail::trim(line.substr(eq + 1)));
        if (key.empty() || value.empty()) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": empty key or value");
        }
        if (auto [it, fresh] = seen.try_emplace(key, line_no); !fresh) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": duplicate key '" + key +
                                                   "' (first on line " + std::to_string(it->second) + ")");
        }
        entries.push_back({key, value, line_no});
    }

    ExperimentSetup s = default_setup();
    bool explicit_z1_offset = false;
    std::vector<const detail::ConfigEntry *> party_keys, channel_keys;
    using Setter = std::function<void(const detail::ConfigEntry &)>;
    auto num = [](double &field) -> Setter { return [&field](const auto &e) { field = detail::number_value(e); }; };
    auto integer = [](int &field) -> Setter { return [&field](const auto &e) { field = detail::int_value(e); }; };
    std::map<std::string, Setter, std::less<>> setters{
        {"source.pair_rate_mu", num(s.source.pair_rate_mu)},
        {"source.phase_mean", num(s.source.phase_mean)},
        {"source.phase_sigma", num(s.source.phase_sigma)},
        {"source.bin_separation_tau", num(s.source.bin_separation_tau)},
        {"source.pump_power_uw", num(s.source.pump_power_uw)},
        {"transformer.polarizer_angle", num(s.transformer.polarizer_angle)},
        {"transformer.excess_loss_db", num(s.transformer.excess_loss_db)},
        {"transformer.pm_fiber_transmission", num(s.transformer.pm_fiber_transmission)},
        {"transformer.glan_extinction_ratio", num(s.transformer.glan_extinction_ratio)},
        {"transformer.delay_slots", integer(s.transformer.delay_slots)},
        {"decoder.phase_phi", num(s.decoder.phase_phi)},
        {"decoder.z_branch_ratio", num(s.decoder.z_branch_ratio)},
        {"decoder.delay_slots", integer(s.decoder.delay_slots)},
        {"decoder.insertion_loss_db", num(s.decoder.insertion_loss_db)},
        {"decoder.z_port_split", num(s.decoder.z_port_split)},
        {"experiment.alice_basis",
         [&s](const auto &e) {
             if (e.value == "Z" || e.value == "z") {
                 s.alice_basis = Basis::Z;
             } else if (e.value == "X" || e.value == "x") {
                 s.alice_basis = Basis::X;
             } else {
                 throw Error(ErrorCode::ParseError,
                             "line " + std::to_string(e.line) + ": alice_basis must be Z or X, got '" + e.value + "'");
             }
         }},
        {"coincidence.window", num(s.coincidence.window)},
        {"coincidence.generator_delay", num(s.coincidence.generator_delay)},
        {"coincidence.scan_delay", num(s.coincidence.scan_delay)},
        {"coincidence.histogram_bin", num(s.coincidence.histogram_bin)},
        {"temperature.t0", num(s.temperature.t0)},
        {"temperature.period_k", num(s.temperature.period_k)},
        {"montecarlo.chunk_duration", num(s.chunk_duration)},
    };

    auto unknown = [](const detail::ConfigEntry &e) {
        return Error(ErrorCode::UnknownKey, "line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    };
    for (const auto &e : entries) {
        if (auto it = setters.find(e.key); it != setters.end()) {
            it->second(e);
            continue;
        }
        std::string_view k = e.key;
        if (k.starts_with("coincidence.offset.")) {
            auto c = parse_channel(k.substr(std::string_view("coincidence.offset.").size()));
            if (!c || !channel_party(*c) || *c == Channel::BZdir) {
                throw unknown(e);
            }
            s.coincidence.channel_offsets[*c] = detail::number_value(e);
            explicit_z1_offset |= *c == Channel::BZ1;
            continue;
        }
        if (k.starts_with("detectors.")) {
            auto rest = k.substr(std::string_view("detectors.").size());
            auto dot = rest.rfind('.');
            if (dot == std::string_view::npos) {
                throw unknown(e);
            }
            auto who = rest.substr(0, dot);
            if (who == "A" || who == "B") {
                party_keys.push_back(&e);
            } else if (auto c = parse_channel(who); c && s.detectors.contains(*c)) {
                channel_keys.push_back(&e);
            } else {
                throw unknown(e);
            }
            continue;
        }
        throw unknown(e);
    }
    for (const auto *group : {&party_keys, &channel_keys}) {
        for (const auto *e : *group) {
            std::string_view rest = std::string_view(e->key).substr(std::string_view("detectors.").size());
            auto dot = rest.rfind('.');
            auto who = rest.substr(0, dot);
            auto field = rest.substr(dot + 1);
            bool ok = true;
            if (who == "A" || who == "B") {
                Party p = who == "A" ? Party::A : Party::B;
                for (auto &[c, d] : s.detectors) {
                    if (channel_party(c) == p) {
                        ok = ok && detail::set_detector_field(d, field, *e);
                    }
                }
            } else {
                ok = detail::set_detector_field(s.detectors.at(*parse_channel(who)), field, *e);
            }
            if (!ok) {
                throw unknown(*e);
            }
        }
    }
    if (!explicit_z1_offset) {
        s.coincidence.channel_offsets[Channel::BZ1] = s.source.bin_separation_tau;
    }
    s.validate();
    return s;
}

inline ExperimentSetup parse_config(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot read config '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

/// Every field, one key per line, in a fixed order.
inline std::string serialize_config(const ExperimentSetup &s) {
    std::ostringstream o;
    auto kv = [&](const std::string &k, const std::string &v) { o << k << " = " << v << "\n"; };
    auto kd = [&](const std::string &k, double v) { kv(k, format_double(v)); };
    kd("source.pair_rate_mu", s.source.pair_rate_mu);
    kd("source.phase_mean", s.source.phase_mean);
    kd("source.phase_sigma", s.source.phase_sigma);
    kd("source.bin_separation_tau", s.source.bin_separation_tau);
    kd("source.pump_power_uw", s.source.pump_power_uw);
    kd("transformer.polarizer_angle", s.transformer.polarizer_angle);
    kd("transformer.excess_loss_db", s.transformer.excess_loss_db);
    kd("transformer.pm_fiber_transmission", s.transformer.pm_fiber_transmission);
    kd("transformer.glan_extinction_ratio", s.transformer.glan_extinction_ratio);
    kv("transformer.delay_slots", std::to_string(s.transformer.delay_slots));
    kd("decoder.phase_phi", s.decoder.phase_phi);
    kd("decoder.z_branch_ratio", s.decoder.z_branch_ratio);
    kv("decoder.delay_slots", std::to_string(s.decoder.delay_slots));
    kd("decoder.insertion_loss_db", s.decoder.insertion_loss_db);
    kd("decoder.z_port_split", s.decoder.z_port_split);
    kv("experiment.alice_basis", std::string(basis_name(s.alice_basis)));
    for (const auto &[c, d] : s.detectors) {
        std::string p = "detectors." + std::string(channel_name(c)) + ".";
        kd(p + "efficiency", d.efficiency);
        kd(p + "dark_rate", d.dark_rate);
        kd(p + "jitter_sigma", d.jitter_sigma);
        kd(p + "dead_time", d.dead_time);
        kv(p + "gated", d.gated ? "true" : "false");
        kd(p + "gate_width", d.gate_width);
    }
    kd("coincidence.window", s.coincidence.window);
    kd("coincidence.generator_delay", s.coincidence.generator_delay);
    kd("coincidence.scan_delay", s.coincidence.scan_delay);
    kd("coincidence.histogram_bin", s.coincidence.histogram_bin);
    for (const auto &[c, off] : s.coincidence.channel_offsets) {
        kd("coincidence.offset." + std::string(channel_name(c)), off);
    }
    kd("temperature.t0", s.temperature.t0);
    kd("temperature.period_k", s.temperature.period_k);
    kd("montecarlo.chunk_duration", s.chunk_duration);
    return o.str();
}

/// 64-bit FNV-1a of the canonical serialization, as 16 hex digits.
inline std::string config_hash(const ExperimentSetup &s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : serialize_config(s)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Field-by-field equality through the canonical text.
inline bool same_setup(const ExperimentSetup &a, const ExperimentSetup &b) {
    return serialize_config(a) == serialize_config(b);
}

}  // namespace hybridqkd
