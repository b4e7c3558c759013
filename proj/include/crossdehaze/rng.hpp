#pragma once

#include <cstdint>
#include <string_view>

#include "crossdehaze/error.hpp"

namespace crossdehaze {

/// Counter-based deterministic random stream.
///
/// Each output is the SplitMix64 finalizer applied to
/// key + GOLDEN * (counter + 1), so the sequence depends only on the
/// 64-bit key and the number of prior draws. No platform-dependent
/// state (in particular, no std:: distributions) is involved, which
/// makes every sequence bit-reproducible across platforms.
///
/// split() derives an independent child stream from (key, label hash,
/// per-parent split counter). The full algorithm is written out in
/// docs/FORMATS.md.
class Rng {
public:
    explicit Rng(uint64_t seed) : key_(seed) {}

    uint64_t next_u64() { return mix(key_, counter_++); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Uniform integer in [lo, hi], both inclusive. Uses the modulo
    /// reduction; the bias is below 2^-32 for any range this library uses
    /// and the reduction is the same on every platform.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        require(lo <= hi, Errc::invalid_argument, "uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    /// Independent child stream. Children with the same label drawn in the
    /// same order from the same parent state are identical; any change to
    /// label or draw order changes the stream.
    Rng split(std::string_view label) {
        uint64_t h = fnv1a(label);
        return Rng(mix(mix(key_, h), ++split_counter_));
    }

    Rng split(uint64_t index) {
        return Rng(mix(mix(key_, 0x9E6C63D0876A9A47ull ^ index), ++split_counter_));
    }

private:
    static uint64_t mix(uint64_t key, uint64_t counter) {
        uint64_t z = key + 0x9E3779B97F4A7C15ull * (counter + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static uint64_t fnv1a(std::string_view s) {
        uint64_t h = 0xCBF29CE484222325ull;
        for (char ch : s) {
            h ^= static_cast<unsigned char>(ch);
            h *= 0x100000001B3ull;
        }
        return h;
    }

    uint64_t key_;
    uint64_t counter_ = 0;
    uint64_t split_counter_ = 0;
};

}  // namespace crossdehaze
