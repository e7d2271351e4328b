#pragma once

#include <cstdint>
#include <random>

namespace marketgame {

/// SplitMix64 finalizer; used to derive independent per-path seeds from
/// (base seed, path index) so paths can be generated in any order.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return splitmix64(splitmix64(base) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// mt19937_64 with a portable [0, 1) draw (std::uniform_real_distribution
/// is not specified bit-for-bit across standard libraries).
class PathRng {
public:
    explicit PathRng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
};

}  // namespace marketgame
