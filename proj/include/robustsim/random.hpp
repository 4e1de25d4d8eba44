#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <utility>
#include <vector>

namespace robustsim {

/// Identifier written into every output file.
inline constexpr const char* kPrngId = "mt19937_64+splitmix64-path/v1";

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/**
 * Names a reproducible random substream as (seed, path).
 *
 * Substream keys are built by folding each path element, together with its
 * depth, through SplitMix64. The key then seeds a mt19937_64 engine through a
 * seed_seq of eight 32-bit words, so each substream has the full 2^19937-1
 * period. Streams never share state: deriving is pure.
 */
class RandomStream {
public:
    using Engine = std::mt19937_64;

    explicit RandomStream(std::uint64_t seed = 0, std::vector<std::uint64_t> path = {})
        : seed_(seed), path_(std::move(path)) {}

    std::uint64_t seed() const noexcept { return seed_; }
    const std::vector<std::uint64_t>& path() const noexcept { return path_; }

    RandomStream derive(std::uint64_t k) const {
        auto p = path_;
        p.push_back(k);
        return RandomStream(seed_, std::move(p));
    }

    RandomStream derive(std::initializer_list<std::uint64_t> ks) const {
        auto p = path_;
        p.insert(p.end(), ks.begin(), ks.end());
        return RandomStream(seed_, std::move(p));
    }

    /// 64-bit key of this substream.
    std::uint64_t key() const noexcept {
        std::uint64_t h = detail::splitmix64(seed_ ^ 0x6a09e667f3bcc909ULL);
        std::uint64_t depth = 0;
        for (auto k : path_) {
            ++depth;
            h = detail::splitmix64(h ^ detail::splitmix64(k + depth * 0x9e3779b97f4a7c15ULL));
        }
        return detail::splitmix64(h ^ depth);
    }

    Engine engine() const {
        std::uint64_t s = key();
        std::uint32_t words[8];
        for (auto& w : words) {
            s = detail::splitmix64(s);
            w = static_cast<std::uint32_t>(s >> 32);
        }
        std::seed_seq seq(std::begin(words), std::end(words));
        return Engine(seq);
    }

private:
    std::uint64_t seed_;
    std::vector<std::uint64_t> path_;
};

/// Uniform on the open interval (0,1), 53 bits.
inline double uniform_open(RandomStream::Engine& eng) noexcept {
    return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Exp(rate) by inversion.
inline double exponential(RandomStream::Engine& eng, double rate) noexcept {
    return -std::log(uniform_open(eng)) / rate;
}

/// Standard normal via the Marsaglia polar method; the second variate is discarded.
inline double standard_normal(RandomStream::Engine& eng) noexcept {
    double u, v, s;
    do {
        u = 2.0 * uniform_open(eng) - 1.0;
        v = 2.0 * uniform_open(eng) - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return u * std::sqrt(-2.0 * std::log(s) / s);
}

}  // namespace robustsim
