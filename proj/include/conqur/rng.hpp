#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace conqur {

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// SplitMix64 generator. Satisfies UniformRandomBitGenerator, but the
/// library only draws through the helpers below so that streams are
/// reproducible independent of the standard library's distributions.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() noexcept {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n). Rejection sampling, so unbiased.
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t x;
        do {
            x = (*this)();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller (one draw per call, the pair's
    /// second value is discarded to keep streams position-independent).
    double normal() noexcept;

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

/// Derives an independent stream for `label:index` from a master seed.
/// The key is FNV-1a over the ASCII text "label:index" (index in decimal)
/// xor-ed into the master seed, then passed once through SplitMix64.
Rng split_stream(std::uint64_t master, std::string_view label, std::uint64_t index = 0);

/// The 64-bit key used by split_stream, exposed for documentation/tests.
std::uint64_t stream_key(std::uint64_t master, std::string_view label, std::uint64_t index);

}  // namespace conqur
