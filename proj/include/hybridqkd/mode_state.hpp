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
#include <complex>
#include <compare>
#include <cstdio>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "hybridqkd/channel.hpp"
#include "hybridqkd/error.hpp"

namespace hybridqkd {

using cplx = std::complex<double>;

inline constexpr double kNormTolerance = 1e-12;
inline constexpr double kTableTolerance = 1e-9;
inline constexpr double kPruneMagnitude = 1e-15;

/// A single-photon mode. `slot` counts delays of one AMZI period from the
/// first emission bin.
struct ModeLabel {
    Party party = Party::A;
    int slot = 0;
    Pol pol = Pol::None;
    Channel channel = Channel::Free;

    auto operator<=>(const ModeLabel &) const = default;
};

inline std::string to_string(const ModeLabel &m) {
    std::ostringstream out;
    out << party_name(m.party) << ":s" << m.slot << ":" << pol_name(m.pol) << ":" << channel_name(m.channel);
    return out.str();
}

inline void check_label(const ModeLabel &m) {
    if (m.slot < 0) {
        throw Error(ErrorCode::InvalidLabel, "negative time slot in " + to_string(m));
    }
    if (m.party == Party::A && m.pol == Pol::None) {
        throw Error(ErrorCode::InvalidLabel, "Alice's photon needs a polarization: " + to_string(m));
    }
    if (m.channel == Channel::Lost) {
        throw Error(ErrorCode::InvalidLabel, "'lost' is not a mode: " + to_string(m));
    }
    if (auto owner = channel_party(m.channel); owner && *owner != m.party) {
        throw Error(ErrorCode::InvalidLabel, "channel belongs to the other party: " + to_string(m));
    }
}

using LabelPair = std::pair<ModeLabel, ModeLabel>;

class LinearMap;

/// Sub-normalized two-photon amplitude table. The first label is always
/// Alice's photon, the second Bob's. Immutable once built.
class JointState {
   public:
    using Amplitudes = std::map<LabelPair, cplx>;

    const Amplitudes &amplitudes() const noexcept {
        return amps_;
    }

    std::size_t size() const noexcept {
        return amps_.size();
    }

    double norm2() const {
        double n = 0;
        for (const auto &[k, a] : amps_) {
            n += std::norm(a);
        }
        return n;
    }

    cplx amplitude(const ModeLabel &a, const ModeLabel &b) const {
        auto it = amps_.find({a, b});
        return it == amps_.end() ? cplx{} : it->second;
    }

   private:
    explicit JointState(Amplitudes amps) : amps_(std::move(amps)) {
    }

    friend JointState build_state(std::span<const std::pair<LabelPair, cplx>> entries);
    friend JointState apply_local_map(const JointState &state, const LinearMap &map);
    friend JointState scale_state(const JointState &state, cplx factor);

    Amplitudes amps_;
};

inline JointState build_state(std::span<const std::pair<LabelPair, cplx>> entries) {
    if (entries.empty()) {
        throw Error(ErrorCode::EmptyState, "a joint state needs at least one amplitude");
    }
    JointState::Amplitudes amps;
    double n = 0;
    for (auto [labels, amp] : entries) {
        auto [a, b] = labels;
        if (a.party == b.party) {
            throw Error(ErrorCode::InvalidLabel, "both photons on party " + std::string(party_name(a.party)));
        }
        if (a.party == Party::B) {
            std::swap(a, b);
        }
        check_label(a);
        check_label(b);
        if (!amps.emplace(LabelPair{a, b}, amp).second) {
            throw Error(ErrorCode::DuplicateLabel, to_string(a) + " / " + to_string(b));
        }
        n += std::norm(amp);
    }
    if (n > 1 + kNormTolerance) {
        throw Error(ErrorCode::NotSubnormalized, "norm^2 = " + std::to_string(n));
    }
    return JointState(std::move(amps));
}

inline JointState build_state(std::initializer_list<std::pair<LabelPair, cplx>> entries) {
    return build_state(std::span<const std::pair<LabelPair, cplx>>(entries.begin(), entries.size()));
}

/// Multiplies every amplitude by a common factor with |factor| <= 1.
inline JointState scale_state(const JointState &state, cplx factor) {
    if (std::abs(factor) > 1 + kNormTolerance) {
        throw Error(ErrorCode::NotSubnormalized, "scale factor exceeds unit modulus");
    }
    JointState::Amplitudes out;
    for (const auto &[k, a] : state.amplitudes()) {
        out.emplace(k, a * factor);
    }
    return JointState(std::move(out));
}

/// Pattern a map rule is keyed on. Optics are time-invariant, so the slot is
/// not part of the key; outputs carry a relative slot shift instead.
struct MapInput {
    Pol pol = Pol::None;
    Channel channel = Channel::Free;
    auto operator<=>(const MapInput &) const = default;
};

struct MapTerm {
    int slot_shift = 0;
    Pol pol = Pol::None;
    Channel channel = Channel::Free;
    cplx coeff;
};

/// Linear optical component acting on one photon of the pair.
class LinearMap {
   public:
    using Rules = std::map<MapInput, std::vector<MapTerm>>;

    LinearMap(Party party, Rules rules, bool passthrough = false) : party_(party), passthrough_(passthrough) {
        for (auto &[in, terms] : rules) {
            rules_.emplace(in, merge_terms(terms));
        }
    }

    /// Leaves every label untouched.
    static LinearMap identity(Party party) {
        return LinearMap(party, {}, true);
    }

    Party party() const noexcept {
        return party_;
    }
    const Rules &rules() const noexcept {
        return rules_;
    }
    bool passthrough() const noexcept {
        return passthrough_;
    }

    const std::vector<MapTerm> *find(const MapInput &in) const {
        auto it = rules_.find(in);
        return it == rules_.end() ? nullptr : &it->second;
    }

    double row_norm2(const MapInput &in) const {
        const auto *terms = find(in);
        if (!terms) {
            return passthrough_ ? 1.0 : 0.0;
        }
        double n = 0;
        for (const auto &t : *terms) {
            n += std::norm(t.coeff);
        }
        return n;
    }

    bool is_subunitary(double tol = kNormTolerance) const {
        for (const auto &[in, terms] : rules_) {
            if (row_norm2(in) > 1 + tol) {
                return false;
            }
        }
        return true;
    }

    bool is_lossless(double tol = kNormTolerance) const {
        for (const auto &[in, terms] : rules_) {
            if (std::abs(row_norm2(in) - 1) > tol) {
                return false;
            }
        }
        return true;
    }

    /// Same map with every coefficient multiplied by `factor`.
    LinearMap scaled(cplx factor) const {
        Rules r;
        for (const auto &[in, terms] : rules_) {
            auto &dst = r[in];
            for (auto t : terms) {
                t.coeff *= factor;
                dst.push_back(t);
            }
        }
        return LinearMap(party_, std::move(r), passthrough_);
    }

   private:
    static std::vector<MapTerm> merge_terms(const std::vector<MapTerm> &terms) {
        std::map<std::tuple<int, Pol, Channel>, cplx> acc;
        for (const auto &t : terms) {
            acc[{t.slot_shift, t.pol, t.channel}] += t.coeff;
        }
        std::vector<MapTerm> out;
        for (const auto &[k, c] : acc) {
            if (std::abs(c) >= kPruneMagnitude) {
                out.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), c});
            }
        }
        return out;
    }

    Party party_;
    Rules rules_;
    bool passthrough_;
};

/// `second` applied after `first`.
inline LinearMap compose(const LinearMap &first, const LinearMap &second) {
    if (first.party() != second.party()) {
        throw Error(ErrorCode::MapPartyMismatch, "cannot compose maps acting on different photons");
    }
    auto push_through = [&](const MapTerm &t, std::vector<MapTerm> &out) {
        const auto *next = second.find({t.pol, t.channel});
        if (!next) {
            if (!second.passthrough()) {
                throw Error(ErrorCode::UnmatchedLabel, "composed map has no rule for an intermediate mode");
            }
            out.push_back(t);
            return;
        }
        for (const auto &u : *next) {
            out.push_back({t.slot_shift + u.slot_shift, u.pol, u.channel, t.coeff * u.coeff});
        }
    };
    LinearMap::Rules rules;
    for (const auto &[in, terms] : first.rules()) {
        auto &dst = rules[in];
        for (const auto &t : terms) {
            push_through(t, dst);
        }
    }
    if (first.passthrough()) {
        for (const auto &[in, terms] : second.rules()) {
            if (!first.find(in)) {
                rules[in] = terms;
            }
        }
    }
    return LinearMap(first.party(), std::move(rules), first.passthrough() && second.passthrough());
}

/// Propagates one photon of the pair through `map`; identical output label
/// pairs add coherently and tiny amplitudes are pruned.
inline JointState apply_local_map(const JointState &state, const LinearMap &map) {
    for (const auto &[in, terms] : map.rules()) {
        for (const auto &t : terms) {
            auto owner = channel_party(t.channel);
            if ((owner && *owner != map.party()) || t.channel == Channel::Lost) {
                throw Error(ErrorCode::MapPartyMismatch, "map for party " + std::string(party_name(map.party())) +
                                                             " routes into " + std::string(channel_name(t.channel)));
            }
            if (map.party() == Party::A && t.pol == Pol::None) {
                throw Error(ErrorCode::MapPartyMismatch, "Alice's photon cannot lose its polarization");
            }
        }
    }
    if (!map.is_subunitary()) {
        throw Error(ErrorCode::MapNotSubnormalized, "a map row has squared coefficient sum above 1");
    }

    JointState::Amplitudes out;
    for (const auto &[labels, amp] : state.amplitudes()) {
        const ModeLabel &target = map.party() == Party::A ? labels.first : labels.second;
        const auto *terms = map.find({target.pol, target.channel});
        if (!terms) {
            if (!map.passthrough()) {
                throw Error(ErrorCode::UnmatchedLabel, "no rule for " + to_string(target));
            }
            out[labels] += amp;
            continue;
        }
        for (const auto &t : *terms) {
            ModeLabel moved = target;
            moved.slot += t.slot_shift;
            moved.pol = t.pol;
            moved.channel = t.channel;
            LabelPair key = map.party() == Party::A ? LabelPair{moved, labels.second} : LabelPair{labels.first, moved};
            out[key] += amp * t.coeff;
        }
    }
    std::erase_if(out, [](const auto &kv) { return std::abs(kv.second) < kPruneMagnitude; });

    JointState result(std::move(out));
    if (result.norm2() > state.norm2() + kNormTolerance) {
        throw Error(ErrorCode::MapNotSubnormalized, "map increased the norm of the state");
    }
    return result;
}

/// Joint detection outcome: which port and slot each photon ended up in. One
/// side may be `Channel::Lost` in tables that track single-photon losses.
struct OutcomeKey {
    Channel alice = Channel::Lost;
    int slot_a = 0;
    Channel bob = Channel::Lost;
    int slot_b = 0;
    auto operator<=>(const OutcomeKey &) const = default;
};

inline std::string to_string(const OutcomeKey &k) {
    std::ostringstream out;
    out << channel_name(k.alice) << "@" << k.slot_a << "," << channel_name(k.bob) << "@" << k.slot_b;
    return out.str();
}

/// Outcome distribution; whatever the entries do not cover is `loss_prob`.
class ProbTable {
   public:
    using Entries = std::map<OutcomeKey, double>;

    ProbTable(Entries entries, double loss_prob) : entries_(std::move(entries)), loss_(loss_prob) {
        double total = loss_;
        for (const auto &[k, p] : entries_) {
            if (!(p >= 0 && p <= 1 + kTableTolerance)) {
                throw Error(ErrorCode::InvalidTable, "probability out of range for " + to_string(k));
            }
            total += p;
        }
        if (!(loss_ >= -kTableTolerance && loss_ <= 1 + kTableTolerance) || std::abs(total - 1) > kTableTolerance) {
            throw Error(ErrorCode::InvalidTable, "entries plus loss must sum to 1, got " + std::to_string(total));
        }
    }

    /// Loss is whatever the entries leave over.
    static ProbTable from_entries(Entries entries) {
        double s = 0;
        for (const auto &[k, p] : entries) {
            s += p;
        }
        return ProbTable(std::move(entries), std::max(0.0, 1 - s));
    }

    const Entries &entries() const noexcept {
        return entries_;
    }
    double loss_prob() const noexcept {
        return loss_;
    }
    double probability(const OutcomeKey &k) const {
        auto it = entries_.find(k);
        return it == entries_.end() ? 0.0 : it->second;
    }
    double total() const {
        double s = 0;
        for (const auto &[k, p] : entries_) {
            s += p;
        }
        return s;
    }

   private:
    Entries entries_;
    double loss_;
};

/// Born-rule probabilities for fully analysed photons. Identical labels were
/// already summed coherently by the maps; labels differing only in
/// polarization land on the same detector incoherently.
inline ProbTable outcome_probabilities(const JointState &state) {
    ProbTable::Entries entries;
    double total = 0;
    for (const auto &[labels, amp] : state.amplitudes()) {
        const auto &[a, b] = labels;
        if (a.channel == Channel::Free || b.channel == Channel::Free) {
            throw Error(ErrorCode::UnresolvedChannel, to_string(a) + " / " + to_string(b));
        }
        double p = std::norm(amp);
        entries[{a.channel, a.slot, b.channel, b.slot}] += p;
        total += p;
    }
    return ProbTable(std::move(entries), std::max(0.0, 1 - total));
}

using MarginalTable = std::map<std::pair<Channel, int>, double>;

/// Detection probabilities for one photon alone, summed over whatever the
/// partner does. Only that party's labels need to be resolved.
inline MarginalTable marginal_probabilities(const JointState &state, Party party) {
    MarginalTable out;
    for (const auto &[labels, amp] : state.amplitudes()) {
        const ModeLabel &m = party == Party::A ? labels.first : labels.second;
        if (m.channel == Channel::Free) {
            throw Error(ErrorCode::UnresolvedChannel, to_string(m));
        }
        out[{m.channel, m.slot}] += std::norm(amp);
    }
    return out;
}

/// Debug table: label, Re, Im, |amp|^2.
inline std::string to_text(const JointState &state) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-22s %-22s %12s %12s %12s\n", "alice", "bob", "re", "im", "|amp|^2");
    out << line;
    for (const auto &[labels, amp] : state.amplitudes()) {
        std::snprintf(line, sizeof line, "%-22s %-22s %12.8f %12.8f %12.8f\n", to_string(labels.first).c_str(),
                      to_string(labels.second).c_str(), amp.real(), amp.imag(), std::norm(amp));
        out << line;
    }
    return out.str();
}

}  // namespace hybridqkd
