#pragma once

#include <cstdint>
#include <limits>

namespace jumpfbsde {

namespace detail {

constexpr std::uint64_t golden_gamma = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based 64-bit generator (SplitMix64 output function over a counter).
///
/// A stream is keyed by (seed, stream id); draw k of a stream depends only on
/// the key and k, so per-path streams are independent of scheduling.
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key_(detail::mix64(detail::mix64(seed) ^ (stream * detail::golden_gamma + 0x632be59bd9b4e019ULL))) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        ++counter_;
        return detail::mix64(key_ + counter_ * detail::golden_gamma);
    }

    /// Uniform variate in the open interval (0, 1).
    double uniform_open() {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace jumpfbsde
