// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace fuzzsel {

// 64-bit FNV-1a. Non-cryptographic; used for content addressing, cache keys
// and seed derivation. Stable across platforms and runs.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// splitmix64 finalizer; spreads low-entropy inputs over all 64 bits.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string hex64(std::uint64_t v);

// Incremental hasher over length-prefixed fields, so ("ab","c") and
// ("a","bc") never collide.
class FieldHasher {
  public:
    FieldHasher& add(std::string_view field);
    FieldHasher& add(std::uint64_t v);
    FieldHasher& add(double v);
    std::uint64_t digest() const { return mix64(state_); }
    std::string hex() const { return hex64(digest()); }

  private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

// Derives a child seed from a run seed plus identifying fields. All
// randomness in the pipeline flows through this.
std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view tag,
                          std::string_view id = {}, std::uint64_t index = 0);

// Deterministic, platform-independent generator (splitmix64 stream).
// std::mt19937 with std::uniform_* is not bit-stable across standard
// libraries, so byte-reproducible selections use this instead.
class DetRng {
  public:
    explicit DetRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n);

  private:
    std::uint64_t state_;
};

} // namespace fuzzsel
