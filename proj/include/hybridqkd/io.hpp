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
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hybridqkd/analysis.hpp"
#include "hybridqkd/calibrate.hpp"
#include "hybridqkd/config.hpp"
#include "hybridqkd/error.hpp"
#include "hybridqkd/experiment.hpp"

namespace hybridqkd {

using Json = nlohmann::json;

/// Provenance written into every artifact.
struct Provenance {
    std::uint64_t seed = 0;
    std::string config_hash;
};

inline std::string provenance_line(const Provenance &p) {
    return "# seed=" + std::to_string(p.seed) + " config_hash=" + p.config_hash + "\n";
}

inline std::string curve_csv(const Curve &curve, const Provenance &p) {
    std::ostringstream o;
    o << provenance_line(p) << "scan_value,channel_pair,counts,duration_s\n";
    for (const auto &pt : curve) {
        o << format_double(pt.scan_value) << "," << pair_name(pt.pair) << "," << pt.counts << ","
          << format_double(pt.duration) << "\n";
    }
    return o.str();
}

inline Curve parse_curve_csv(std::string_view text) {
    Curve out;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        if (!header) {
            if (line != "scan_value,channel_pair,counts,duration_s") {
                throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": unexpected curve header");
            }
            header = true;
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            f.push_back(cell);
        }
        auto bad = [&] { return Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": malformed row"); };
        if (f.size() != 4) {
            throw bad();
        }
        auto x = parse_double(f[0]);
        auto n = parse_double(f[2]);
        auto d = parse_double(f[3]);
        if (!x || !n || !d || *n < 0 || *n != std::floor(*n)) {
            throw bad();
        }
        out.push_back({*x, parse_pair_name(f[1]), static_cast<std::uint64_t>(*n), *d});
    }
    if (!header) {
        throw Error(ErrorCode::ParseError, "curve file has no header");
    }
    return out;
}

inline std::string clicks_csv(std::vector<ClickEvent> clicks, const Provenance &p) {
    std::stable_sort(clicks.begin(), clicks.end(), [](const ClickEvent &a, const ClickEvent &b) {
        return a.time < b.time || (a.time == b.time && a.channel < b.channel);
    });
    std::ostringstream o;
    o << provenance_line(p) << "channel,time_s,origin\n";
    for (const auto &c : clicks) {
        o << channel_name(c.channel) << "," << format_double(c.time) << ","
          << (c.origin == Origin::Photon ? "photon" : "dark") << "\n";
    }
    return o.str();
}

inline Json to_json(const Metrics &m) {
    return Json{{"v_zz", m.v_zz}, {"v_zz_sigma", m.v_zz_sigma}, {"v_xx", m.v_xx}, {"v_xx_sigma", m.v_xx_sigma},
                {"r_z", m.r_z},   {"r_z_sigma", m.r_z_sigma},   {"r_x", m.r_x},   {"r_x_sigma", m.r_x_sigma}};
}

inline Json to_json(const Residuals &r) {
    return Json{{"v_zz", r.v_zz}, {"v_xx", r.v_xx}, {"r_z", r.r_z}, {"r_x", r.r_x}};
}

inline Json to_json(const SecurityReport &r) {
    return Json{{"v_zz", r.v_zz},
                {"v_zz_sigma", r.v_zz_sigma},
                {"v_xx", r.v_xx},
                {"v_xx_sigma", r.v_xx_sigma},
                {"qber_z", r.qber_z},
                {"qber_x", r.qber_x},
                {"chsh_s", r.chsh_s},
                {"bell_violated", r.bell_violated},
                {"key_fraction", r.key_fraction},
                {"key_distillable", r.key_distillable},
                {"sifted_rate", r.sifted_rate},
                {"key_rate", r.key_rate},
                {"f_ec", r.f_ec}};
}

/// Config as a flat key -> value-string object.
inline Json setup_json(const ExperimentSetup &s) {
    Json j = Json::object();
    std::istringstream in(serialize_config(s));
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find(" = ");
        j[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return j;
}

inline Json to_json(const RunRecord &r) {
    Json clicks = Json::object();
    for (const auto &[c, n] : r.clicks) {
        clicks[std::string(channel_name(c))] = n;
    }
    Json co = Json::object();
    for (const auto &[p, n] : r.coincidences) {
        co[pair_name(p)] = n;
    }
    Json hist{{"lo_s", r.histogram.lo()}, {"bin_s", r.histogram.bin_width()}, {"counts", r.histogram.counts()}};
    return Json{{"seed", r.seed},
                {"config_hash", config_hash(r.setup)},
                {"setup", setup_json(r.setup)},
                {"duration_s", r.duration},
                {"pairs", r.pairs},
                {"clicks", clicks},
                {"coincidences", co},
                {"coincidence_total", r.coincidence_total()},
                {"histogram", hist}};
}

inline std::string dump_json(const Json &j) {
    return j.dump(2) + "\n";
}

/// Writes `files` (name -> content) into `dir`, creating it if needed.
inline std::vector<std::string> write_files(const std::string &dir,
                                            const std::vector<std::pair<std::string, std::string>> &files) {
    if (files.empty()) {
        throw Error(ErrorCode::EmptyOutput, "nothing to write");
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot create '" + dir + "': " + ec.message());
    }
    std::vector<std::string> paths;
    for (const auto &[name, content] : files) {
        auto path = (std::filesystem::path(dir) / name).string();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << content;
        out.close();
        if (!out) {
            throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
        }
        paths.push_back(path);
    }
    return paths;
}

inline std::string file_safe(std::string s) {
    for (char &c : s) {
        if (c == ':') {
            c = '_';
        } else if (c == '+') {
            c = 'p';
        } else if (c == '-') {
            c = 'm';
        }
    }
    return s;
}

/// One CSV per channel pair plus the combined curve.
inline std::vector<std::string> write_outputs(const Curve &curve, const std::string &stem, const Provenance &p,
                                              const std::string &dir) {
    if (curve.empty()) {
        throw Error(ErrorCode::EmptyOutput, "curve has no points");
    }
    std::map<ChannelPair, Curve> by_pair;
    for (const auto &pt : curve) {
        by_pair[pt.pair].push_back(pt);
    }
    std::vector<std::pair<std::string, std::string>> files{{stem + ".csv", curve_csv(curve, p)}};
    for (const auto &[pair, c] : by_pair) {
        files.emplace_back(stem + "_" + file_safe(pair_name(pair)) + ".csv", curve_csv(c, p));
    }
    return write_files(dir, files);
}

inline std::vector<std::string> write_outputs(const RunRecord &r, const std::vector<ClickEvent> &clicks,
                                              const std::string &dir) {
    Provenance p{r.seed, config_hash(r.setup)};
    return write_files(dir, {{"run.json", dump_json(to_json(r))}, {"clicks.csv", clicks_csv(clicks, p)}});
}

inline std::vector<std::string> write_outputs(const SecurityReport &r, const Provenance &p, const std::string &dir) {
    Json j = to_json(r);
    j["seed"] = p.seed;
    j["config_hash"] = p.config_hash;
    return write_files(dir, {{"report.json", dump_json(j)}});
}

}  // namespace hybridqkd
