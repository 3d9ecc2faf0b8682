#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace atomsim {

/// 64-bit finalizer from splitmix64. Used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seed for substream `index` of `master`. Depends only on the pair, so
/// work items keyed by index draw the same randomness under any schedule.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept
{
    return mix64(master + 0x9E3779B97F4A7C15ULL * (index + 1));
}

/**
 * Seedable random stream. Every stochastic routine in the library takes one
 * of these explicitly; there is no global generator.
 *
 * Uniforms are built from the top 53 bits of the engine output so that the
 * sequence of values is identical across standard library implementations.
 */
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed = 0) : engine_(mix64(seed)), seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    /// Child stream keyed by `index`; does not advance this stream.
    RandomStream substream(std::uint64_t index) const { return RandomStream(derive_seed(seed_, index)); }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1]; safe to take the logarithm of.
    double uniform_pos() { return 1.0 - uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    /// Geometric on {1, 2, ...} with success probability p, by inversion.
    std::uint64_t geometric(double p)
    {
        if (!(p > 0.0) || p > 1.0)
            throw std::invalid_argument("geometric: success probability must lie in (0, 1]");
        if (p == 1.0)
            return 1;
        const double g = std::floor(std::log(uniform_pos()) / std::log1p(-p));
        if (g >= 9.0e18)
            return std::numeric_limits<std::uint64_t>::max();
        return 1 + static_cast<std::uint64_t>(g);
    }

    /// Uniform integer on {0, ..., n-1}.
    std::size_t index(std::size_t n)
    {
        auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

    /// Box-Muller normal draw; avoids implementation-defined std distributions.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        const double t = 2.0 * M_PI * uniform();
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    friend bool operator==(const RandomStream& a, const RandomStream& b)
    {
        return a.engine_ == b.engine_ && a.has_spare_ == b.has_spare_ && (!a.has_spare_ || a.spare_ == b.spare_);
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Draw an index from unnormalized nonnegative weights by inverting the
/// cumulative sum with one uniform. Ties resolve to the lower index.
inline std::size_t sample_categorical(const std::vector<double>& weights, double total, RandomStream& rng)
{
    const double u = rng.uniform() * total;
    double acc = 0.0;
    const std::size_t n = weights.size();
    for (std::size_t i = 0; i < n; ++i) {
        acc += weights[i];
        if (u < acc)
            return i;
    }
    // Rounding can leave u just above the running sum; take the last positive weight.
    for (std::size_t i = n; i-- > 0;)
        if (weights[i] > 0.0)
            return i;
    return n - 1;
}

} // namespace atomsim
