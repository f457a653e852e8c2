#pragma once

#include <cstdint>
#include <string_view>

namespace tse {

/// SplitMix64 finalizer; a bijective mix of a 64-bit counter.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// FNV-1a, used to derive a per-parameter stream id from its path.
constexpr std::uint64_t hash_path(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Counter-based uniform in [0, 1): a pure function of (seed, stream, counter).
inline double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    const std::uint64_t bits = mix64(mix64(seed ^ mix64(stream)) + counter);
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Small sequential generator with platform-independent output, unlike the
/// std distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() { return mix64(state_++); }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n) by rejection; n > 0.
    std::uint64_t below(std::uint64_t n);
    double normal();

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

}  // namespace tse
