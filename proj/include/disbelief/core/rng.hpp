#pragma once

#include <cstdint>
#include <random>

#include "disbelief/core/tensor.hpp"

namespace disbelief {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent streams derived from one master seed.
enum class Stream : std::uint64_t {
    Env = 1,
    ModelInit = 2,
    PolicyInit = 3,
    Rollout = 4,
    ModelTrain = 5,
    PolicyTrain = 6,
    Evaluation = 7,
    Probe = 8,
};

/// Counter-based derivation: the seed of (master, stream, index) does not
/// depend on how many numbers any other stream has consumed.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0) noexcept {
    return splitmix64(splitmix64(splitmix64(master) ^ static_cast<std::uint64_t>(stream)) + index);
}

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
    return Rng(derive_seed(master, stream, index));
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline Tensor normal_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& v : t.data()) v = nd(rng);
    return t;
}

} // namespace disbelief
