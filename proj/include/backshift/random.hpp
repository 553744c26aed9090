#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace backshift {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of sub-stream `stream` of `master`. Environment j of a simulation
/// uses stream j, subsample run r of stability selection uses stream r, so
/// results never depend on execution order.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept
{
    return splitmix64(master ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

/// Deterministic sampler built on mt19937_64. The transforms are written out
/// here so streams are bit-identical across standard library vendors.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on the open interval (0, 1).
    double uniform()
    {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::uint64_t below(std::uint64_t bound) { return bound == 0 ? 0 : engine_() % bound; }

    /// Laplace(0, scale) by inverse CDF.
    double laplace(double scale = 1.0)
    {
        const double u = uniform();
        return u < 0.5 ? scale * std::log(2.0 * u) : -scale * std::log(2.0 * (1.0 - u));
    }

    /// Exponential parameterised by its mean; mean 0 gives 0.
    double exponential(double mean) { return mean == 0.0 ? 0.0 : -mean * std::log(uniform()); }

    /// Standard normal by Box-Muller, both variates used.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double radius = std::sqrt(-2.0 * std::log(uniform()));
        const double angle = 2.0 * std::numbers::pi * uniform();
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace backshift
