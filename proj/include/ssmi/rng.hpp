#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace ssmi {

// Deterministic 64-bit PRNG (splitmix64). The full recurrence is fixed here
// and in the README so independent implementations can reproduce streams:
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   output = z ^ (z >> 31)
//
// uniform():  (next() >> 11) * 2^-53, in [0, 1)
// normal():   Box-Muller from two fresh draws, no cached spare:
//             u1 = ((next() >> 11) + 1) * 2^-53   in (0, 1]
//             u2 = (next() >> 11) * 2^-53          in [0, 1)
//             return sqrt(-2 ln u1) * cos(2 pi u2)
// below(n):   128-bit multiply-shift, (next() * n) >> 64
// fork(tag):  child seeded with next() ^ (tag * 0x9E3779B97F4A7C15)
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double normal() {
        const double u1 = (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(next() >> 11) * 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    Rng fork(std::uint64_t tag) {
        return Rng(next() ^ (tag * 0x9E3779B97F4A7C15ull));
    }

private:
    std::uint64_t state_;
};

}  // namespace ssmi
