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

#include <cstdint>
#include <limits>

namespace hybridqkd {

/// SplitMix64 bit generator. Cheap enough to seed once per photon, which is
/// what lets every random decision be keyed by (run seed, chunk, pair index)
/// and stay identical no matter how chunks are scheduled.
class SplitMix64 {
   public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed) : state_(seed) {
    }

    static constexpr result_type min() {
        return 0;
    }
    static constexpr result_type max() {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

   private:
    std::uint64_t state_;
};

inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return x;
}

/// Independent child seed for sub-stream `stream` of `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(seed ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(SplitMix64 &rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Named sub-streams.
namespace stream {
inline constexpr std::uint64_t kEmission = 0x01;
inline constexpr std::uint64_t kPhase = 0x02;
inline constexpr std::uint64_t kPair = 0x03;
inline constexpr std::uint64_t kAliceDetect = 0x04;
inline constexpr std::uint64_t kBobDetect = 0x05;
inline constexpr std::uint64_t kDark = 0x06;
inline constexpr std::uint64_t kChunk = 0x07;
inline constexpr std::uint64_t kScanPoint = 0x08;
}  // namespace stream

}  // namespace hybridqkd
