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
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hybridqkd/channel.hpp"
#include "hybridqkd/error.hpp"
#include "hybridqkd/mode_state.hpp"
#include "hybridqkd/random.hpp"

namespace hybridqkd {

/// Emission slot of the earlier (logical |1>) and later (logical |0>) bin.
inline constexpr int kEarlySlot = 0;
inline constexpr int kLateSlot = 1;

struct SourceConfig {
    double pair_rate_mu = 2.0e5;  // pairs per second into the collection modes
    double phase_mean = 0.0;      // mean pump phase difference between bins, radians
    double phase_sigma = 0.0;     // per-pair spread of that phase, radians
    double bin_separation_tau = 2.5e-9;
    double pump_power_uw = 160.0;  // recorded only

    void validate() const {
        if (!(pair_rate_mu >= 0) || !std::isfinite(pair_rate_mu)) {
            throw Error(ErrorCode::InvariantViolation, "source.pair_rate_mu must be finite and >= 0");
        }
        if (!(phase_sigma >= 0) || !std::isfinite(phase_sigma)) {
            throw Error(ErrorCode::InvariantViolation, "source.phase_sigma must be finite and >= 0");
        }
        if (!std::isfinite(phase_mean)) {
            throw Error(ErrorCode::InvariantViolation, "source.phase_mean must be finite");
        }
        if (!(bin_separation_tau > 0) || !std::isfinite(bin_separation_tau)) {
            throw Error(ErrorCode::InvariantViolation, "source.bin_separation_tau must be > 0");
        }
        if (!(pump_power_uw >= 0)) {
            throw Error(ErrorCode::InvariantViolation, "source.pump_power_uw must be >= 0");
        }
    }
};

/// Time-bin entangled pair (|late,late> + e^{i dtheta}|early,early>)/sqrt(2),
/// Alice's photon horizontally polarized out of the crystal.
inline JointState time_bin_pair_state(double delta_theta) {
    const double h = 1 / std::numbers::sqrt2;
    ModeLabel a_late{Party::A, kLateSlot, Pol::H, Channel::Free};
    ModeLabel b_late{Party::B, kLateSlot, Pol::None, Channel::Free};
    ModeLabel a_early{Party::A, kEarlySlot, Pol::H, Channel::Free};
    ModeLabel b_early{Party::B, kEarlySlot, Pol::None, Channel::Free};
    return build_state({{{a_late, b_late}, h}, {{a_early, b_early}, std::polar(h, delta_theta)}});
}

struct EmissionEvent {
    double time = 0;
    double delta_theta = 0;
    bool operator==(const EmissionEvent &) const = default;
};

/// Homogeneous Poisson pair emission on [t_begin, t_end). Gaps and phases come
/// from separate streams, so event i keeps its phase draw when the rate
/// changes.
inline std::vector<EmissionEvent> generate_pairs(const SourceConfig &cfg, double t_begin, double t_end,
                                                 std::uint64_t seed) {
    cfg.validate();
    std::vector<EmissionEvent> out;
    if (cfg.pair_rate_mu <= 0 || !(t_end > t_begin)) {
        return out;
    }
    SplitMix64 gap_rng(derive_seed(seed, stream::kEmission));
    SplitMix64 phase_rng(derive_seed(seed, stream::kPhase));
    std::exponential_distribution<double> gap(cfg.pair_rate_mu);
    std::normal_distribution<double> phase(0.0, 1.0);
    out.reserve(static_cast<std::size_t>(cfg.pair_rate_mu * (t_end - t_begin) * 1.05) + 16);
    double t = t_begin;
    while (true) {
        t += gap(gap_rng);
        if (t >= t_end) {
            break;
        }
        double z = phase(phase_rng);
        out.push_back({t, cfg.phase_sigma == 0 ? cfg.phase_mean : cfg.phase_mean + cfg.phase_sigma * z});
    }
    return out;
}

inline std::vector<EmissionEvent> generate_pairs(const SourceConfig &cfg, double duration, std::uint64_t seed) {
    return generate_pairs(cfg, 0.0, duration, seed);
}

/// Inverse-CDF sampler over the entries of a ProbTable; the residual mass is
/// reported as "lost".
class OutcomeSampler {
   public:
    explicit OutcomeSampler(const ProbTable &table) {
        double c = 0;
        for (const auto &[k, p] : table.entries()) {
            if (p <= 0) {
                continue;
            }
            c += p;
            keys_.push_back(k);
            cumulative_.push_back(c);
        }
    }

    /// Index into keys(), or nullopt when the draw falls in the lost mass.
    std::optional<std::size_t> index_for(double u) const {
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        if (it == cumulative_.end()) {
            return std::nullopt;
        }
        return static_cast<std::size_t>(it - cumulative_.begin());
    }

    std::optional<OutcomeKey> sample(SplitMix64 &rng) const {
        auto i = index_for(uniform01(rng));
        if (!i) {
            return std::nullopt;
        }
        return keys_[*i];
    }

    const std::vector<OutcomeKey> &keys() const noexcept {
        return keys_;
    }

   private:
    std::vector<OutcomeKey> keys_;
    std::vector<double> cumulative_;
};

/// One Born-rule draw from `table`; nullopt means the pair was lost.
inline std::optional<OutcomeKey> sample_joint_outcome(const ProbTable &table, SplitMix64 &rng) {
    return OutcomeSampler(table).sample(rng);
}

struct DetectorConfig {
    double efficiency = 1.0;
    double dark_rate = 0.0;  // counts per second (of open gate time when gated)
    double jitter_sigma = 0.0;
    double dead_time = 0.0;
    bool gated = false;
    double gate_width = 0.0;

    bool operator==(const DetectorConfig &) const = default;

    void validate(const std::string &where) const {
        if (!(efficiency >= 0 && efficiency <= 1)) {
            throw Error(ErrorCode::InvariantViolation, where + ".efficiency must be in [0, 1]");
        }
        for (auto [v, name] : {std::pair{dark_rate, "dark_rate"}, std::pair{jitter_sigma, "jitter_sigma"},
                               std::pair{dead_time, "dead_time"}, std::pair{gate_width, "gate_width"}}) {
            if (!(v >= 0) || !std::isfinite(v)) {
                throw Error(ErrorCode::InvariantViolation, where + "." + name + " must be finite and >= 0");
            }
        }
        if (gated && !(gate_width > 0)) {
            throw Error(ErrorCode::InvariantViolation, where + ".gate_width must be > 0 for a gated detector");
        }
    }
};

/// Si SPCM at 810 nm, free running.
inline DetectorConfig spcm_defaults() {
    return {.efficiency = 0.55, .dark_rate = 100.0, .jitter_sigma = 0.3e-9, .dead_time = 22e-9, .gated = false,
            .gate_width = 0.0};
}

/// InGaAs APD at 1550 nm in gated Geiger mode; 1e-5 dark counts per 1 ns gate.
inline DetectorConfig gated_apd_defaults() {
    return {.efficiency = 0.10, .dark_rate = 1e-5 / 1e-9, .jitter_sigma = 0.2e-9, .dead_time = 1e-6, .gated = true,
            .gate_width = 1e-9};
}

using DetectorBank = std::map<Channel, DetectorConfig>;

struct CoincidenceConfig {
    double window = 40e-9;
    std::map<Channel, double> channel_offsets;  // electronic delay added to each channel's click times
    double generator_delay = 0.0;               // trigger to gate centre
    double scan_delay = 0.0;
    double histogram_bin = 0.25e-9;

    bool operator==(const CoincidenceConfig &) const = default;

    double offset(Channel c) const {
        auto it = channel_offsets.find(c);
        return it == channel_offsets.end() ? 0.0 : it->second;
    }

    void validate() const {
        if (!(window > 0) || !std::isfinite(window)) {
            throw Error(ErrorCode::InvariantViolation, "coincidence.window must be > 0");
        }
        if (!(histogram_bin > 0) || !std::isfinite(histogram_bin)) {
            throw Error(ErrorCode::InvariantViolation, "coincidence.histogram_bin must be > 0");
        }
        for (const auto &[c, off] : channel_offsets) {
            if (!std::isfinite(off)) {
                throw Error(ErrorCode::InvariantViolation,
                            "coincidence.offset." + std::string(channel_name(c)) + " must be finite");
            }
        }
        if (!std::isfinite(generator_delay) || !std::isfinite(scan_delay)) {
            throw Error(ErrorCode::InvariantViolation, "coincidence delays must be finite");
        }
    }
};

enum class Origin : std::uint8_t { Photon, Dark };

struct ClickEvent {
    Channel channel = Channel::Free;
    double time = 0;
    Origin origin = Origin::Photon;
    bool operator==(const ClickEvent &) const = default;
};

/// Photon reaching a detector. `key` identifies the photon so its detection
/// randomness does not depend on the order or number of other arrivals.
struct Arrival {
    Channel channel = Channel::Free;
    double time = 0;
    std::uint64_t key = 0;
};

/// Open-gate intervals per gated detector.
class GateSchedule {
   public:
    struct Interval {
        double start;
        double end;
    };

    void add(Channel c, double start, double end) {
        by_channel_[c].push_back({start, end});
        finalized_ = false;
    }

    /// Sorts and merges overlapping intervals; required before queries.
    void finalize() {
        for (auto &[c, v] : by_channel_) {
            std::sort(v.begin(), v.end(), [](const Interval &a, const Interval &b) { return a.start < b.start; });
            std::vector<Interval> merged;
            for (const auto &iv : v) {
                if (!merged.empty() && iv.start <= merged.back().end) {
                    merged.back().end = std::max(merged.back().end, iv.end);
                } else {
                    merged.push_back(iv);
                }
            }
            v = std::move(merged);
        }
        finalized_ = true;
    }

    bool is_open(Channel c, double t) const {
        auto it = by_channel_.find(c);
        if (it == by_channel_.end()) {
            return false;
        }
        const auto &v = it->second;
        auto pos = std::upper_bound(v.begin(), v.end(), t, [](double x, const Interval &iv) { return x < iv.start; });
        if (pos == v.begin()) {
            return false;
        }
        --pos;
        return t <= pos->end;
    }

    std::span<const Interval> intervals(Channel c) const {
        auto it = by_channel_.find(c);
        if (it == by_channel_.end()) {
            return {};
        }
        return it->second;
    }

    bool finalized() const noexcept {
        return finalized_;
    }

   private:
    std::map<Channel, std::vector<Interval>> by_channel_;
    bool finalized_ = true;
};

/// Gates opened on Bob's detectors by Alice's clicks: each trigger opens a gate
/// of the detector's width centred on the trigger's effective time plus the
/// generator delay, expressed back in the detector's raw time.
inline GateSchedule gates_from_triggers(std::span<const ClickEvent> triggers, const DetectorBank &bob,
                                        const CoincidenceConfig &cc) {
    GateSchedule g;
    for (const auto &[ch, det] : bob) {
        if (!det.gated) {
            continue;
        }
        double half = det.gate_width / 2;
        double shift = cc.generator_delay - cc.offset(ch);
        for (const auto &t : triggers) {
            double centre = t.time + cc.offset(t.channel) + shift;
            g.add(ch, centre - half, centre + half);
        }
    }
    g.finalize();
    return g;
}

inline void require_sorted(std::span<const Arrival> arrivals) {
    for (std::size_t i = 1; i < arrivals.size(); ++i) {
        if (arrivals[i].time < arrivals[i - 1].time) {
            throw Error(ErrorCode::UnsortedInput, "arrivals must be time-sorted");
        }
    }
}

/// Turns photon arrivals into clicks on the detectors in `bank`. Gated
/// detectors drop photons outside open gates before the efficiency draw;
/// survivors get Gaussian jitter; dark counts are Poisson over [t_begin, t_end)
/// or over the open gates; a click within the dead time of the previous click
/// on its channel is dropped. Output is time-sorted.
inline std::vector<ClickEvent> detect(std::span<const Arrival> arrivals, const DetectorBank &bank,
                                      const GateSchedule *gates, double t_begin, double t_end, std::uint64_t seed) {
    require_sorted(arrivals);
    if (gates && !gates->finalized()) {
        throw Error(ErrorCode::InvariantViolation, "gate schedule must be finalized");
    }
    std::vector<ClickEvent> clicks;
    clicks.reserve(arrivals.size() / 4 + 8);

    std::map<Channel, const DetectorConfig *> cfg;
    for (const auto &[c, d] : bank) {
        cfg[c] = &d;
    }
    for (const auto &a : arrivals) {
        auto it = cfg.find(a.channel);
        if (it == cfg.end()) {
            throw Error(ErrorCode::InvariantViolation,
                        "no detector configured for channel " + std::string(channel_name(a.channel)));
        }
        const DetectorConfig &d = *it->second;
        if (d.gated && (!gates || !gates->is_open(a.channel, a.time))) {
            continue;
        }
        SplitMix64 rng(derive_seed(seed, a.key));
        if (uniform01(rng) >= d.efficiency) {
            continue;
        }
        double t = a.time;
        if (d.jitter_sigma > 0) {
            std::normal_distribution<double> jitter(0.0, d.jitter_sigma);
            t += jitter(rng);
        }
        clicks.push_back({a.channel, t, Origin::Photon});
    }

    for (const auto &[c, d] : bank) {
        if (d.dark_rate <= 0) {
            continue;
        }
        SplitMix64 rng(derive_seed(derive_seed(seed, stream::kDark), static_cast<std::uint64_t>(c)));
        if (!d.gated) {
            if (!(t_end > t_begin)) {
                continue;
            }
            std::poisson_distribution<long> n(d.dark_rate * (t_end - t_begin));
            for (long i = n(rng); i > 0; --i) {
                clicks.push_back({c, t_begin + uniform01(rng) * (t_end - t_begin), Origin::Dark});
            }
            continue;
        }
        if (!gates) {
            continue;
        }
        auto iv = gates->intervals(c);
        std::vector<double> cum;
        cum.reserve(iv.size());
        double open = 0;
        for (const auto &g : iv) {
            open += g.end - g.start;
            cum.push_back(open);
        }
        if (open <= 0) {
            continue;
        }
        std::poisson_distribution<long> n(d.dark_rate * open);
        for (long i = n(rng); i > 0; --i) {
            double x = uniform01(rng) * open;
            auto k = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), x) - cum.begin());
            k = std::min(k, iv.size() - 1);
            double before = k == 0 ? 0.0 : cum[k - 1];
            clicks.push_back({c, iv[k].start + (x - before), Origin::Dark});
        }
    }

    std::stable_sort(clicks.begin(), clicks.end(), [](const ClickEvent &a, const ClickEvent &b) {
        return a.time < b.time;
    });
    std::map<Channel, double> last;
    std::vector<ClickEvent> kept;
    kept.reserve(clicks.size());
    for (const auto &c : clicks) {
        double dead = cfg.at(c.channel)->dead_time;
        auto it = last.find(c.channel);
        if (it != last.end() && c.time - it->second < dead) {
            continue;
        }
        last[c.channel] = c.time;
        kept.push_back(c);
    }
    return kept;
}

/// Histogram of effective Bob-minus-Alice delays over one coincidence window.
class DelayHistogram {
   public:
    DelayHistogram() = default;
    DelayHistogram(double window, double bin_width)
        : bin_width_(bin_width),
          lo_(-window / 2),
          counts_(static_cast<std::size_t>(std::max(1.0, std::ceil(window / bin_width - 1e-9))), 0) {
    }

    void add(double dt) {
        auto idx = static_cast<long>(std::floor((dt - lo_) / bin_width_));
        idx = std::clamp(idx, 0L, static_cast<long>(counts_.size()) - 1);
        ++counts_[static_cast<std::size_t>(idx)];
    }

    void merge(const DelayHistogram &other) {
        if (counts_.empty()) {
            *this = other;
            return;
        }
        if (other.counts_.empty()) {
            return;
        }
        if (other.counts_.size() != counts_.size() || other.bin_width_ != bin_width_ || other.lo_ != lo_) {
            throw Error(ErrorCode::InvariantViolation, "cannot merge histograms with different binning");
        }
        for (std::size_t i = 0; i < counts_.size(); ++i) {
            counts_[i] += other.counts_[i];
        }
    }

    double bin_width() const noexcept {
        return bin_width_;
    }
    double lo() const noexcept {
        return lo_;
    }
    double bin_centre(std::size_t i) const {
        return lo_ + (static_cast<double>(i) + 0.5) * bin_width_;
    }
    const std::vector<std::uint64_t> &counts() const noexcept {
        return counts_;
    }
    std::uint64_t total() const {
        return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
    }

    bool operator==(const DelayHistogram &) const = default;

   private:
    double bin_width_ = 0;
    double lo_ = 0;
    std::vector<std::uint64_t> counts_;
};

struct CoincidenceResult {
    std::map<ChannelPair, std::uint64_t> counts;
    DelayHistogram histogram;

    std::uint64_t total() const {
        std::uint64_t s = 0;
        for (const auto &[k, n] : counts) {
            s += n;
        }
        return s;
    }
};

/// Greedy earliest-first pairing: in order of effective time each Alice click
/// takes the earliest unused Bob click with
/// |t_b + off_b - t_a - off_a - scan_delay| <= window / 2.
inline CoincidenceResult coincidences(std::span<const ClickEvent> alice, std::span<const ClickEvent> bob,
                                      const CoincidenceConfig &cfg, double scan_delay) {
    auto check = [](std::span<const ClickEvent> v, const char *who) {
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (v[i].time < v[i - 1].time) {
                throw Error(ErrorCode::UnsortedInput, std::string(who) + " clicks must be time-sorted");
            }
        }
    };
    check(alice, "alice");
    check(bob, "bob");

    struct Eff {
        double t;
        std::size_t i;
    };
    auto effective = [&](std::span<const ClickEvent> v, double extra) {
        std::vector<Eff> e(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            e[i] = {v[i].time + cfg.offset(v[i].channel) + extra, i};
        }
        std::stable_sort(e.begin(), e.end(), [](const Eff &a, const Eff &b) { return a.t < b.t; });
        return e;
    };
    auto ea = effective(alice, scan_delay);
    auto eb = effective(bob, 0.0);

    CoincidenceResult out{{}, DelayHistogram(cfg.window, cfg.histogram_bin)};
    const double half = cfg.window / 2;
    std::size_t j = 0;
    for (const auto &a : ea) {
        while (j < eb.size() && eb[j].t < a.t - half) {
            ++j;
        }
        if (j < eb.size() && eb[j].t <= a.t + half) {
            ++out.counts[{alice[a.i].channel, bob[eb[j].i].channel}];
            out.histogram.add(eb[j].t - a.t);
            ++j;
        }
    }
    return out;
}

}  // namespace hybridqkd
