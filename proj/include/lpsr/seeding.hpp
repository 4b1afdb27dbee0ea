#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>

namespace lpsr {

// splitmix64: stable stream-independent seed scrambler. Used to derive
// sub-seeds (per restart, per problem, per layer) from one root seed so that
// every component of a run is reproducible from the config seed alone.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x8f1bbcdcbfa53e0bULL;
    for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
    return h;
}

// FNV-1a over raw bytes. Stable within a build; used for cache digests and
// basis config digests where cheap content fingerprints are enough.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace lpsr
