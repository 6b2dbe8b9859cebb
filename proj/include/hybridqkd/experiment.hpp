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
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <thread>
#include <vector>

#include "hybridqkd/analysis.hpp"
#include "hybridqkd/channel.hpp"
#include "hybridqkd/error.hpp"
#include "hybridqkd/mode_state.hpp"
#include "hybridqkd/optics.hpp"
#include "hybridqkd/random.hpp"
#include "hybridqkd/source_detect.hpp"

namespace hybridqkd {

/// Linear thermo-optic tuning of the decoder phase.
struct TemperatureModel {
    double t0 = 0.0;        // degrees C where phi = 0
    double period_k = 0.4;  // kelvin per 2 pi

    bool operator==(const TemperatureModel &) const = default;

    double phase_at(double temperature) const {
        return 2 * std::numbers::pi * (temperature - t0) / period_k;
    }

    void validate() const {
        if (!(period_k > 0) || !std::isfinite(period_k) || !std::isfinite(t0)) {
            throw Error(ErrorCode::InvariantViolation, "temperature.period_k must be > 0");
        }
    }
};

struct ExperimentSetup {
    SourceConfig source;
    TransformerConfig transformer;
    DecoderConfig decoder;
    Basis alice_basis = Basis::Z;
    DetectorBank detectors;
    CoincidenceConfig coincidence;
    TemperatureModel temperature;
    double chunk_duration = 0.05;  // Monte Carlo work unit, seconds

    void validate() const {
        source.validate();
        transformer.validate();
        decoder.validate();
        coincidence.validate();
        temperature.validate();
        for (Channel c : kDetectorChannels) {
            auto it = detectors.find(c);
            if (it == detectors.end()) {
                throw Error(ErrorCode::InvariantViolation,
                            "detectors." + std::string(channel_name(c)) + " is not configured");
            }
            it->second.validate("detectors." + std::string(channel_name(c)));
            bool bob = channel_party(c) == Party::B;
            if (bob && it->second.gated && !(it->second.gate_width < source.bin_separation_tau)) {
                throw Error(ErrorCode::InvariantViolation, "detectors." + std::string(channel_name(c)) +
                                                               ".gate_width must be shorter than the bin separation");
            }
        }
        if (!(chunk_duration > 0) || !std::isfinite(chunk_duration)) {
            throw Error(ErrorCode::InvariantViolation, "montecarlo.chunk_duration must be > 0");
        }
    }

    DetectorBank alice_bank() const {
        DetectorBank b;
        for (Channel c : alice_channels(alice_basis)) {
            b[c] = detectors.at(c);
        }
        return b;
    }

    DetectorBank bob_bank() const {
        DetectorBank b;
        for (Channel c : {Channel::BZ0, Channel::BZ1, Channel::BXPlus, Channel::BXMinus}) {
            b[c] = detectors.at(c);
        }
        return b;
    }
};

/// The hardware described for the experiment, with the unstated noise terms at
/// their nominal values. B.Z1 is read out one bin later than B.Z0 so both
/// correlated Z peaks sit at zero delay.
inline ExperimentSetup default_setup() {
    ExperimentSetup s;
    for (Channel c : {Channel::AZ0, Channel::AZ1, Channel::AXPlus, Channel::AXMinus}) {
        s.detectors[c] = spcm_defaults();
    }
    for (Channel c : {Channel::BZ0, Channel::BZ1, Channel::BXPlus, Channel::BXMinus}) {
        s.detectors[c] = gated_apd_defaults();
    }
    s.coincidence.channel_offsets[Channel::BZ1] = s.source.bin_separation_tau;
    return s;
}

/// Lossless, noiseless variant used as a reference point.
inline ExperimentSetup ideal_setup() {
    ExperimentSetup s = default_setup();
    s.transformer.excess_loss_db = 0;
    s.transformer.glan_extinction_ratio = std::numeric_limits<double>::infinity();
    s.source.phase_sigma = 0;
    for (auto &[c, d] : s.detectors) {
        d.efficiency = 1;
        d.dark_rate = 0;
        d.jitter_sigma = 0;
        d.dead_time = 0;
    }
    return s;
}

/// Alice's optics (transformer then analyzer) as one map.
inline LinearMap alice_map(const ExperimentSetup &s) {
    return compose(format_transformer_map(s.transformer), pbs_analyzer_map(s.alice_basis));
}

/// Exact outcome distribution over all time slots for a given pump phase.
inline ProbTable analytic_distribution(const ExperimentSetup &s, double delta_theta) {
    JointState st = time_bin_pair_state(delta_theta);
    st = apply_local_map(st, alice_map(s));
    st = apply_local_map(st, plc_decoder_map(s.decoder));
    return outcome_probabilities(st);
}

/// Single-photon detection probabilities per (channel, slot). Neither depends
/// on the pump phase: the partner's two bins are orthogonal.
inline MarginalTable alice_marginal(const ExperimentSetup &s) {
    return marginal_probabilities(apply_local_map(time_bin_pair_state(0.0), alice_map(s)), Party::A);
}

inline MarginalTable bob_marginal(const ExperimentSetup &s) {
    return marginal_probabilities(apply_local_map(time_bin_pair_state(0.0), plc_decoder_map(s.decoder)), Party::B);
}

/// The pair state split into its late and early emission components after
/// all optics, so P(k; dtheta) = sum |a_late + e^{i dtheta} a_early|^2 can be
/// evaluated without re-running the maps.
class PhaseResolvedModel {
   public:
    struct Term {
        cplx late;
        cplx early;
    };

    explicit PhaseResolvedModel(const ExperimentSetup &s) {
        const double h = 1 / std::numbers::sqrt2;
        auto propagate = [&](int slot) {
            ModeLabel a{Party::A, slot, Pol::H, Channel::Free};
            ModeLabel b{Party::B, slot, Pol::None, Channel::Free};
            JointState st = build_state({{{a, b}, cplx(h, 0)}});
            st = apply_local_map(st, alice_map(s));
            return apply_local_map(st, plc_decoder_map(s.decoder));
        };
        JointState late = propagate(kLateSlot);
        JointState early = propagate(kEarlySlot);
        std::map<LabelPair, Term> merged;
        for (const auto &[l, amp] : late.amplitudes()) {
            merged[l].late = amp;
        }
        for (const auto &[l, amp] : early.amplitudes()) {
            merged[l].early = amp;
        }
        std::map<OutcomeKey, std::size_t> index;
        for (const auto &[l, t] : merged) {
            OutcomeKey k{l.first.channel, l.first.slot, l.second.channel, l.second.slot};
            auto [it, fresh] = index.try_emplace(k, keys_.size());
            if (fresh) {
                keys_.push_back(k);
                terms_.emplace_back();
            }
            terms_[it->second].push_back(t);
        }
    }

    const std::vector<OutcomeKey> &keys() const noexcept {
        return keys_;
    }

    /// Probability of each key, in keys() order.
    std::vector<double> probabilities(double delta_theta) const {
        return probabilities(std::polar(1.0, delta_theta));
    }

    /// Same with e^{i dtheta} replaced by an arbitrary phasor; passing the
    /// characteristic function of a phase distribution gives its average.
    std::vector<double> probabilities(cplx phasor) const {
        std::vector<double> p(keys_.size(), 0.0);
        for (std::size_t i = 0; i < keys_.size(); ++i) {
            for (const auto &t : terms_[i]) {
                p[i] += std::norm(t.late) + std::norm(t.early) + 2 * (std::conj(t.late) * phasor * t.early).real();
            }
        }
        return p;
    }

    ProbTable distribution(double delta_theta) const {
        return to_table(probabilities(delta_theta));
    }

    /// Average over Normal(mean, sigma) pump phase, exact through
    /// <e^{i dtheta}> = e^{i mean - sigma^2 / 2}.
    ProbTable averaged_distribution(double mean, double sigma) const {
        return to_table(probabilities(std::polar(std::exp(-sigma * sigma / 2), mean)));
    }

   private:
    ProbTable to_table(const std::vector<double> &p) const {
        ProbTable::Entries e;
        double total = 0;
        for (std::size_t i = 0; i < keys_.size(); ++i) {
            e[keys_[i]] = std::max(0.0, p[i]);
            total += e[keys_[i]];
        }
        return ProbTable(std::move(e), std::max(0.0, 1 - total));
    }

    std::vector<OutcomeKey> keys_;
    std::vector<std::vector<Term>> terms_;
};

/// Alice's photon is always taken at the reference slot.
inline constexpr int kAliceReferenceSlot = kLateSlot;

/// Distribution the Monte Carlo samples from. Under continuous pumping a pair
/// is only defined relative to Alice's detection, so her photon is placed at
/// the reference slot and every one of her detections inherits the partner
/// statistics of that slot, scaled by kappa_a = P_A(a) / P_A(a, ref). Keys
/// with `Lost` on one side are singles.
inline ProbTable stationary_pair_table(const ProbTable &full, const MarginalTable &alice, const MarginalTable &bob) {
    std::map<Channel, double> pa_all, pa_ref, pb_all;
    for (const auto &[k, p] : alice) {
        pa_all[k.first] += p;
        if (k.second == kAliceReferenceSlot) {
            pa_ref[k.first] += p;
        }
    }
    for (const auto &[k, p] : bob) {
        pb_all[k.first] += p;
    }
    ProbTable::Entries e;
    std::map<Channel, double> joint_a, joint_b;
    for (const auto &[k, p] : full.entries()) {
        if (k.slot_a != kAliceReferenceSlot || p <= 0) {
            continue;
        }
        double ref = pa_ref[k.alice];
        if (ref <= 0) {
            continue;
        }
        double q = p * pa_all[k.alice] / ref;
        e[{k.alice, kAliceReferenceSlot, k.bob, k.slot_b}] += q;
        joint_a[k.alice] += q;
        joint_b[k.bob] += q;
    }
    for (const auto &[c, p] : pa_all) {
        double single = p - joint_a[c];
        if (single > 0) {
            e[{c, kAliceReferenceSlot, Channel::Lost, 0}] += single;
        }
    }
    // Bob's singles make up P(A or B); per channel they follow the positive
    // part of his marginal minus his paired detections.
    double pb_total = 0, joint_total = 0, excess_total = 0;
    std::map<Channel, double> excess;
    for (const auto &[c, p] : pb_all) {
        pb_total += p;
        joint_total += joint_b[c];
        excess[c] = std::max(0.0, p - joint_b[c]);
        excess_total += excess[c];
    }
    double singles = std::max(0.0, pb_total - joint_total);
    if (excess_total > 0) {
        for (const auto &[c, x] : excess) {
            if (x > 0) {
                e[{Channel::Lost, 0, c, kAliceReferenceSlot}] += singles * x / excess_total;
            }
        }
    }
    return ProbTable::from_entries(std::move(e));
}

inline ProbTable pair_outcome_table(const ExperimentSetup &s, double delta_theta) {
    return stationary_pair_table(analytic_distribution(s, delta_theta), alice_marginal(s), bob_marginal(s));
}

/// Samplers of the pair table on a 2 pi / 4096 grid of pump phases, built for
/// the bins the phase distribution can reach (within 8 sigma).
class PairSamplerCache {
   public:
    static constexpr int kBins = 4096;

    explicit PairSamplerCache(const ExperimentSetup &s)
        : model_(s), alice_(alice_marginal(s)), bob_(bob_marginal(s)), sigma_(s.source.phase_sigma),
          mean_(s.source.phase_mean), samplers_(kBins) {
        if (sigma_ == 0) {
            exact_ = std::make_unique<OutcomeSampler>(table(mean_));
            return;
        }
        double reach = 8 * sigma_;
        if (2 * reach >= 2 * std::numbers::pi) {
            for (int k = 0; k < kBins; ++k) {
                build(k);
            }
            return;
        }
        long lo = std::lround(std::floor((mean_ - reach) / kBinWidth));
        long hi = std::lround(std::ceil((mean_ + reach) / kBinWidth));
        for (long k = lo; k <= hi; ++k) {
            build(wrap(k));
        }
    }

    static int bin_of(double delta_theta) {
        return wrap(std::lround(delta_theta / kBinWidth));
    }

    static double bin_phase(int bin) {
        return bin * kBinWidth;
    }

    /// Sampler for `delta_theta`; with zero phase spread the exact phase is used.
    const OutcomeSampler &at(double delta_theta, std::unique_ptr<OutcomeSampler> &scratch) const {
        if (exact_) {
            return *exact_;
        }
        const auto &slot = samplers_[static_cast<std::size_t>(bin_of(delta_theta))];
        if (slot) {
            return *slot;
        }
        scratch = std::make_unique<OutcomeSampler>(table(bin_phase(bin_of(delta_theta))));
        return *scratch;
    }

    ProbTable table(double delta_theta) const {
        return stationary_pair_table(model_.distribution(delta_theta), alice_, bob_);
    }

   private:
    static constexpr double kBinWidth = 2 * std::numbers::pi / kBins;

    static int wrap(long k) {
        long m = k % kBins;
        return static_cast<int>(m < 0 ? m + kBins : m);
    }

    void build(int k) {
        auto &slot = samplers_[static_cast<std::size_t>(k)];
        if (!slot) {
            slot = std::make_unique<OutcomeSampler>(table(bin_phase(k)));
        }
    }

    PhaseResolvedModel model_;
    MarginalTable alice_;
    MarginalTable bob_;
    double sigma_;
    double mean_;
    std::vector<std::unique_ptr<OutcomeSampler>> samplers_;
    std::unique_ptr<OutcomeSampler> exact_;
};

struct RunRecord {
    ExperimentSetup setup;
    std::uint64_t seed = 0;
    double duration = 0;
    std::uint64_t pairs = 0;
    std::map<Channel, std::uint64_t> clicks;
    std::map<ChannelPair, std::uint64_t> coincidences;
    DelayHistogram histogram;

    std::uint64_t coincidence_total() const {
        std::uint64_t s = 0;
        for (const auto &[k, n] : coincidences) {
            s += n;
        }
        return s;
    }

    std::uint64_t count(Channel a, Channel b) const {
        auto it = coincidences.find({a, b});
        return it == coincidences.end() ? 0 : it->second;
    }

    /// Adds another chunk of the same run.
    void merge(const RunRecord &o) {
        duration += o.duration;
        pairs += o.pairs;
        for (const auto &[c, n] : o.clicks) {
            clicks[c] += n;
        }
        for (const auto &[p, n] : o.coincidences) {
            coincidences[p] += n;
        }
        histogram.merge(o.histogram);
    }

    bool operator==(const RunRecord &o) const {
        return seed == o.seed && duration == o.duration && pairs == o.pairs && clicks == o.clicks &&
               coincidences == o.coincidences && histogram == o.histogram;
    }
};

struct ChunkOutput {
    RunRecord record;
    std::vector<ClickEvent> alice_clicks;
    std::vector<ClickEvent> bob_clicks;
};

/// Samples every emitted pair of a chunk: calls visit(i, key, bob_detector)
/// with key == nullptr for a pair lost on both sides. The direct Z branch is
/// resolved onto B.Z0 / B.Z1 here. Randomness is keyed by (chunk seed, i).
template <class Visit>
void draw_pairs(const ExperimentSetup &s, const PairSamplerCache &cache, std::uint64_t chunk_seed,
                const std::vector<EmissionEvent> &events, Visit &&visit) {
    const std::uint64_t pair_seed = derive_seed(chunk_seed, stream::kPair);
    std::unique_ptr<OutcomeSampler> scratch;
    for (std::size_t i = 0; i < events.size(); ++i) {
        SplitMix64 rng(derive_seed(pair_seed, i));
        const auto &sampler = cache.at(events[i].delta_theta, scratch);
        auto idx = sampler.index_for(uniform01(rng));
        if (!idx) {
            visit(i, static_cast<const OutcomeKey *>(nullptr), Channel::Lost);
            continue;
        }
        const OutcomeKey &k = sampler.keys()[*idx];
        Channel b = k.bob;
        if (b == Channel::BZdir) {
            b = uniform01(rng) < s.decoder.z_port_split ? Channel::BZ0 : Channel::BZ1;
        }
        visit(i, &k, b);
    }
}

inline std::uint64_t chunk_seed(std::uint64_t seed, std::uint64_t chunk_index) {
    return derive_seed(derive_seed(seed, stream::kChunk), chunk_index);
}

/// One Monte Carlo work unit over [t_begin, t_end). Everything random is keyed
/// by (seed, chunk_index), so chunks can run in any order.
inline ChunkOutput run_chunk(const ExperimentSetup &s, const PairSamplerCache &cache, std::uint64_t seed,
                             std::uint64_t chunk_index, double t_begin, double t_end, bool keep_clicks = false) {
    const std::uint64_t cseed = chunk_seed(seed, chunk_index);
    const double tau = s.source.bin_separation_tau;
    auto events = generate_pairs(s.source, t_begin, t_end, cseed);

    std::vector<Arrival> alice, bob;
    alice.reserve(events.size() / 2);
    bob.reserve(events.size());
    draw_pairs(s, cache, cseed, events, [&](std::size_t i, const OutcomeKey *k, Channel b) {
        if (!k) {
            return;
        }
        double te = events[i].time;
        if (k->alice != Channel::Lost) {
            alice.push_back({k->alice, te + k->slot_a * tau, 2 * i});
        }
        if (b != Channel::Lost) {
            bob.push_back({b, te + k->slot_b * tau, 2 * i + 1});
        }
    });
    auto a_clicks = detect(alice, s.alice_bank(), nullptr, t_begin, t_end, derive_seed(cseed, stream::kAliceDetect));
    DetectorBank bbank = s.bob_bank();
    GateSchedule gates = gates_from_triggers(a_clicks, bbank, s.coincidence);
    // Photons outside every gate never click; dropping them here only saves
    // work since each arrival's randomness is keyed to the photon.
    std::array<bool, kAllChannels.size()> gated{};
    for (const auto &[c, d] : bbank) {
        gated[static_cast<std::size_t>(c)] = d.gated;
    }
    std::erase_if(bob, [&](const Arrival &a) {
        return gated[static_cast<std::size_t>(a.channel)] && !gates.is_open(a.channel, a.time);
    });
    std::sort(bob.begin(), bob.end(), [](const Arrival &a, const Arrival &b) { return a.time < b.time; });
    auto b_clicks = detect(bob, bbank, &gates, t_begin, t_end, derive_seed(cseed, stream::kBobDetect));
    auto co = coincidences(a_clicks, b_clicks, s.coincidence, s.coincidence.scan_delay);

    ChunkOutput out;
    RunRecord &r = out.record;
    r.seed = seed;
    r.duration = t_end - t_begin;
    r.pairs = events.size();
    for (Channel c : alice_channels(s.alice_basis)) {
        r.clicks[c] = 0;
    }
    for (Channel c : {Channel::BZ0, Channel::BZ1, Channel::BXPlus, Channel::BXMinus}) {
        r.clicks[c] = 0;
    }
    for (const auto &c : a_clicks) {
        ++r.clicks[c.channel];
    }
    for (const auto &c : b_clicks) {
        ++r.clicks[c.channel];
    }
    r.coincidences = std::move(co.counts);
    r.histogram = std::move(co.histogram);
    if (keep_clicks) {
        out.alice_clicks = std::move(a_clicks);
        out.bob_clicks = std::move(b_clicks);
    }
    return out;
}

struct RunOptions {
    unsigned threads = 1;
    bool keep_clicks = false;
};

inline std::uint64_t chunk_count(const ExperimentSetup &s, double duration) {
    return static_cast<std::uint64_t>(std::ceil(duration / s.chunk_duration - 1e-9));
}

/// Runs chunks [first, last) of a run of total `duration` and merges them in
/// chunk order.
inline RunRecord run_chunks(const ExperimentSetup &s, const PairSamplerCache &cache, double duration,
                            std::uint64_t seed, std::uint64_t first, std::uint64_t last, const RunOptions &opt = {},
                            std::vector<ClickEvent> *clicks_out = nullptr) {
    std::vector<ChunkOutput> outs(static_cast<std::size_t>(last > first ? last - first : 0));
    auto work = [&](std::uint64_t i) {
        double t0 = static_cast<double>(i) * s.chunk_duration;
        double t1 = std::min(duration, static_cast<double>(i + 1) * s.chunk_duration);
        outs[static_cast<std::size_t>(i - first)] = run_chunk(s, cache, seed, i, t0, t1, opt.keep_clicks);
    };
    unsigned nthreads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(outs.size())));
    if (nthreads <= 1) {
        for (std::uint64_t i = first; i < last; ++i) {
            work(i);
        }
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(nthreads);
        for (unsigned t = 0; t < nthreads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::uint64_t i = first + t; i < last; i += nthreads) {
                        work(i);
                    }
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto &th : pool) {
            th.join();
        }
        for (auto &e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
    }
    RunRecord total;
    total.setup = s;
    total.seed = seed;
    total.histogram = DelayHistogram(s.coincidence.window, s.coincidence.histogram_bin);
    for (auto &o : outs) {
        total.merge(o.record);
        if (clicks_out) {
            clicks_out->insert(clicks_out->end(), o.alice_clicks.begin(), o.alice_clicks.end());
            clicks_out->insert(clicks_out->end(), o.bob_clicks.begin(), o.bob_clicks.end());
        }
    }
    return total;
}

/// Full Monte Carlo run: Poisson pairs, sampled outcomes, detectors, gating and
/// coincidence counting. Deterministic per seed regardless of thread count.
inline RunRecord run_montecarlo(const ExperimentSetup &s, double duration, std::uint64_t seed,
                                const RunOptions &opt = {}, std::vector<ClickEvent> *clicks_out = nullptr) {
    s.validate();
    if (!(duration > 0) || !std::isfinite(duration)) {
        throw Error(ErrorCode::InvariantViolation, "duration must be > 0");
    }
    PairSamplerCache cache(s);
    return run_chunks(s, cache, duration, seed, 0, chunk_count(s, duration), opt, clicks_out);
}

struct CurvePoint {
    double scan_value = 0;
    ChannelPair pair;
    std::uint64_t counts = 0;
    double duration = 0;
    bool operator==(const CurvePoint &) const = default;
};

using Curve = std::vector<CurvePoint>;

inline std::vector<double> scan_grid(double lo, double hi, double step) {
    if (!(step > 0) || !std::isfinite(step)) {
        throw Error(ErrorCode::InvariantViolation, "scan step must be > 0");
    }
    if (!(hi >= lo)) {
        throw Error(ErrorCode::InvariantViolation, "scan range must satisfy min <= max");
    }
    std::vector<double> v;
    auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) {
        v.push_back(lo + static_cast<double>(i) * step);
    }
    return v;
}

namespace detail {

inline void append_points(Curve &curve, double x, const RunRecord &r, Basis basis) {
    for (Channel a : alice_channels(basis)) {
        for (Channel b : bob_channels(basis)) {
            curve.push_back({x, {a, b}, r.count(a, b), r.duration});
        }
    }
}

}  // namespace detail

/// Coincidence counts versus delay. Moving the delay shifts both the gate
/// generator and the coincidence reference, as a delay line in the trigger
/// path would.
inline Curve scan_delay(const ExperimentSetup &s, const std::vector<double> &delays, double duration,
                        std::uint64_t seed, const RunOptions &opt = {}) {
    s.validate();
    PairSamplerCache cache(s);
    Curve curve;
    for (std::size_t i = 0; i < delays.size(); ++i) {
        ExperimentSetup p = s;
        p.coincidence.scan_delay = delays[i];
        p.coincidence.generator_delay = delays[i];
        auto r = run_chunks(p, cache, duration, derive_seed(derive_seed(seed, stream::kScanPoint), i), 0,
                            chunk_count(p, duration), opt);
        detail::append_points(curve, delays[i], r, s.alice_basis);
    }
    return curve;
}

/// X-basis coincidences versus decoder temperature.
inline Curve scan_temperature(const ExperimentSetup &s, const std::vector<double> &temperatures, double duration,
                              std::uint64_t seed, const RunOptions &opt = {}) {
    Curve curve;
    for (std::size_t i = 0; i < temperatures.size(); ++i) {
        ExperimentSetup p = s;
        p.alice_basis = Basis::X;
        p.decoder.phase_phi = s.temperature.phase_at(temperatures[i]);
        auto r = run_montecarlo(p, duration, derive_seed(derive_seed(seed, stream::kScanPoint), i), opt);
        detail::append_points(curve, temperatures[i], r, Basis::X);
    }
    return curve;
}

/// Sums the curve over `pairs` at each scan value, as (x, counts) points.
inline std::vector<std::pair<double, double>> curve_sum(const Curve &c, const std::vector<ChannelPair> &pairs) {
    std::map<double, double> acc;
    for (const auto &p : c) {
        if (std::find(pairs.begin(), pairs.end(), p.pair) != pairs.end()) {
            acc[p.scan_value] += static_cast<double>(p.counts);
        } else {
            acc.try_emplace(p.scan_value, 0.0);
        }
    }
    return {acc.begin(), acc.end()};
}

inline std::vector<ChannelPair> same_pairs(Basis b) {
    auto a = alice_channels(b);
    auto o = bob_channels(b);
    return {{a[0], o[0]}, {a[1], o[1]}};
}

inline std::vector<ChannelPair> cross_pairs(Basis b) {
    auto a = alice_channels(b);
    auto o = bob_channels(b);
    return {{a[0], o[1]}, {a[1], o[0]}};
}

/// Headline numbers of a measurement campaign.
struct Metrics {
    double v_zz = 0;
    double v_zz_sigma = 0;
    double v_xx = 0;
    double v_xx_sigma = 0;
    double r_z = 0;
    double r_z_sigma = 0;
    double r_x = 0;
    double r_x_sigma = 0;
};

/// Z run length and the X temperature scan (`x_points` spread over one
/// period) that define a measurement of Metrics.
struct MetricPlan {
    double z_duration = 10.0;
    int x_points = 10;
    double x_duration = 1.0;

    std::vector<double> temperatures(const TemperatureModel &m) const {
        std::vector<double> t;
        for (int i = 0; i < x_points; ++i) {
            t.push_back(m.t0 + m.period_k * i / x_points);
        }
        return t;
    }
};

/// Metrics from Z coincidences at zero delay and an X fringe. The fringe is
/// fitted with the known temperature period.
inline Metrics metrics_from(const RunRecord &z, const Curve &x, const TemperatureModel &tm) {
    Metrics m;
    double same = 0, cross = 0;
    for (auto p : same_pairs(Basis::Z)) {
        same += static_cast<double>(z.count(p.alice, p.bob));
    }
    for (auto p : cross_pairs(Basis::Z)) {
        cross += static_cast<double>(z.count(p.alice, p.bob));
    }
    auto vz = visibility(same, cross);
    m.v_zz = vz.value;
    m.v_zz_sigma = vz.sigma;
    m.r_z = (same + cross) / z.duration;
    m.r_z_sigma = std::sqrt(same + cross) / z.duration;

    auto fringe = curve_sum(x, same_pairs(Basis::X));
    auto fit = fit_fringe(fringe, tm.period_k);
    m.v_xx = fit.visibility;
    m.v_xx_sigma = fit.visibility_sigma;
    double total = 0, time = 0;
    std::map<double, double> dur;
    for (const auto &p : x) {
        total += static_cast<double>(p.counts);
        dur[p.scan_value] = p.duration;
    }
    for (const auto &[k, d] : dur) {
        time += d;
    }
    m.r_x = total / time;
    m.r_x_sigma = std::sqrt(total) / time;
    return m;
}

inline Metrics measure_metrics(const ExperimentSetup &s, const MetricPlan &plan, std::uint64_t seed,
                               const RunOptions &opt = {}) {
    ExperimentSetup z = s;
    z.alice_basis = Basis::Z;
    auto zr = run_montecarlo(z, plan.z_duration, derive_seed(seed, 1), opt);
    auto xc = scan_temperature(s, plan.temperatures(s.temperature), plan.x_duration, derive_seed(seed, 2), opt);
    return metrics_from(zr, xc, s.temperature);
}

namespace detail {

inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Probability that a Bob photon arriving `dt` after Alice's photon falls in
/// the gate her click opens on detector b.
inline double gate_acceptance(const ExperimentSetup &s, Channel a, Channel b, double dt) {
    const auto &db = s.detectors.at(b);
    if (!db.gated) {
        return 1.0;
    }
    const auto &cc = s.coincidence;
    double m = dt - (cc.offset(a) + cc.generator_delay - cc.offset(b));
    double half = db.gate_width / 2;
    double sigma = s.detectors.at(a).jitter_sigma;
    if (sigma <= 0) {
        return std::abs(m) <= half ? 1.0 : 0.0;
    }
    return normal_cdf((half - m) / sigma) - normal_cdf((-half - m) / sigma);
}

}  // namespace detail

/// Mean coincidence rates per channel pair without sampling: true
/// coincidences from the phase-averaged pair table, plus accidentals from
/// dark counts and unrelated photons inside each gate. Dead time and
/// multi-photon saturation are ignored.
inline std::map<ChannelPair, double> expected_rates(const ExperimentSetup &s) {
    s.validate();
    PhaseResolvedModel model(s);
    auto table = stationary_pair_table(model.averaged_distribution(s.source.phase_mean, s.source.phase_sigma),
                                       alice_marginal(s), bob_marginal(s));
    const double mu = s.source.pair_rate_mu;
    const double tau = s.source.bin_separation_tau;
    auto split = [&](Channel b) {
        if (b == Channel::BZ0) {
            return std::pair{Channel::BZdir, s.decoder.z_port_split};
        }
        if (b == Channel::BZ1) {
            return std::pair{Channel::BZdir, 1 - s.decoder.z_port_split};
        }
        return std::pair{b, 1.0};
    };
    std::map<Channel, double> alice_single, bob_photon;
    for (const auto &[k, p] : table.entries()) {
        if (k.alice != Channel::Lost) {
            alice_single[k.alice] += p;
        }
        if (k.bob != Channel::Lost) {
            bob_photon[k.bob] += p;
        }
    }
    std::map<ChannelPair, double> out;
    for (Channel a : alice_channels(s.alice_basis)) {
        const auto &da = s.detectors.at(a);
        double alice_rate = mu * alice_single[a] * da.efficiency + da.dark_rate;
        for (Channel b : bob_channels(s.alice_basis)) {
            const auto &db = s.detectors.at(b);
            auto [src, frac] = split(b);
            double rate = 0;
            for (const auto &[k, p] : table.entries()) {
                if (k.alice != a || k.bob != src) {
                    continue;
                }
                double dt = (k.slot_b - k.slot_a) * tau;
                rate += mu * p * frac * da.efficiency * db.efficiency * detail::gate_acceptance(s, a, b, dt);
            }
            double open = db.gated ? db.gate_width : s.coincidence.window;
            double background = db.dark_rate + mu * bob_photon[src] * frac * db.efficiency;
            rate += alice_rate * background * open;
            out[{a, b}] = rate;
        }
    }
    return out;
}

/// Metrics predicted by expected_rates over the same plan.
inline Metrics expected_metrics(const ExperimentSetup &s, const MetricPlan &plan) {
    ExperimentSetup z = s;
    z.alice_basis = Basis::Z;
    auto rz = expected_rates(z);
    Metrics m;
    double same = 0, cross = 0;
    for (auto p : same_pairs(Basis::Z)) {
        same += rz[p];
    }
    for (auto p : cross_pairs(Basis::Z)) {
        cross += rz[p];
    }
    m.v_zz = (same - cross) / (same + cross);
    m.r_z = same + cross;
    std::vector<std::pair<double, double>> fringe;
    double total = 0;
    for (double t : plan.temperatures(s.temperature)) {
        ExperimentSetup x = s;
        x.alice_basis = Basis::X;
        x.decoder.phase_phi = s.temperature.phase_at(t);
        auto rx = expected_rates(x);
        double c = 0;
        for (auto p : same_pairs(Basis::X)) {
            c += rx[p];
        }
        fringe.emplace_back(t, c);
        for (const auto &[p, r] : rx) {
            total += r;
        }
    }
    m.v_xx = fit_fringe(fringe, s.temperature.period_k).visibility;
    m.r_x = total / static_cast<double>(plan.x_points);
    return m;
}

}  // namespace hybridqkd
