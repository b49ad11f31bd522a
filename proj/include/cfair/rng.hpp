#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace cfair {

/// SplitMix64 finalizer. Used both as the stream generator and to combine keys.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t combine_keys(std::uint64_t a, std::uint64_t b) noexcept {
    return mix64(a ^ mix64(b + 0x632be59bd9b4e019ULL));
}

/// FNV-1a over a name; stable across runs and platforms.
constexpr std::uint64_t name_hash(std::string_view name) noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

/// Counter-based generator: every stream is a pure function of its key, so a
/// draw never depends on which thread produced it or on iteration order.
/// Satisfies UniformRandomBitGenerator.
class KeyedRng {
public:
    using result_type = std::uint64_t;

    explicit KeyedRng(std::uint64_t key) noexcept : state_(mix64(key)) {}
    KeyedRng(std::uint64_t a, std::uint64_t b) noexcept : KeyedRng(combine_keys(a, b)) {}
    KeyedRng(std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept
        : KeyedRng(combine_keys(combine_keys(a, b), c)) {}
    KeyedRng(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) noexcept
        : KeyedRng(combine_keys(combine_keys(combine_keys(a, b), c), d)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; no cached second variate so the
    /// consumption pattern is fixed at two words per call.
    double normal() noexcept {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

}  // namespace cfair
