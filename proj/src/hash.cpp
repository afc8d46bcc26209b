// SPDX-License-Identifier: Apache-2.0
#include "fuzzsel/hash.hpp"

#include <array>
#include <cstdio>

namespace fuzzsel {

std::string hex64(std::uint64_t v) {
    std::array<char, 17> buf{};
    std::snprintf(buf.data(), buf.size(), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf.data(), 16);
}

FieldHasher& FieldHasher::add(std::string_view field) {
    std::uint64_t len = field.size();
    for (int i = 0; i < 8; ++i) {
        state_ ^= static_cast<unsigned char>(len >> (8 * i));
        state_ *= 0x100000001b3ULL;
    }
    state_ = fnv1a64(field, state_);
    return *this;
}

FieldHasher& FieldHasher::add(std::uint64_t v) {
    char buf[21];
    std::snprintf(buf, sizeof(buf), "%llu", static_cast<unsigned long long>(v));
    return add(std::string_view(buf));
}

FieldHasher& FieldHasher::add(double v) {
    // Hash the shortest round-trip decimal form so 1.0 and 1 differ from 1.5
    // consistently across platforms.
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return add(std::string_view(buf));
}

std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view tag, std::string_view id,
                          std::uint64_t index) {
    FieldHasher h;
    h.add(run_seed).add(tag).add(id).add(index);
    return h.digest();
}

std::uint64_t DetRng::below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

} // namespace fuzzsel
