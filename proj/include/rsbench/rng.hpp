#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace rsbench {

/// SplitMix64 output function.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based generator: the i-th draw of stream (seed, stream) is a pure
/// function of (seed, stream, i), so results never depend on how work is
/// split across threads.
class CounterRng {
public:
    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_(mix64(mix64(seed + kGolden) ^ (stream * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL))) {}

    std::uint64_t bits(std::uint64_t counter) const noexcept { return mix64(key_ + (counter + 1) * kGolden); }

    /// Uniform on the open interval (0, 1).
    double uniform(std::uint64_t counter) const noexcept {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Two independent standard normals from counters 2c and 2c+1 (Box-Muller).
    void normal_pair(std::uint64_t c, double& z0, double& z1) const noexcept {
        const double r = std::sqrt(-2.0 * std::log(uniform(2 * c)));
        const double phi = 2.0 * std::numbers::pi * uniform(2 * c + 1);
        z0 = r * std::cos(phi);
        z1 = r * std::sin(phi);
    }

    /// Fills `out` with standard normals drawn from block `block`; blocks of
    /// the same stream never share counters as long as out.size() <= width.
    void normals(std::uint64_t block, std::size_t width, std::span<double> out) const noexcept {
        const std::uint64_t pairs = (width + 1) / 2;
        const std::uint64_t base = block * pairs;
        for (std::size_t i = 0; i < out.size(); i += 2) {
            double z0 = 0.0, z1 = 0.0;
            normal_pair(base + i / 2, z0, z1);
            out[i] = z0;
            if (i + 1 < out.size()) out[i + 1] = z1;
        }
    }

private:
    std::uint64_t key_;
};

/// Deterministic sub-seed for a named role of a run.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t role) noexcept {
    return mix64(seed ^ mix64(role + 0x8f1bbcdcbfa53e0aULL));
}

}  // namespace rsbench
