#pragma once

#include "atomsim/errors.hpp"
#include "atomsim/models/normal.hpp"
#include "atomsim/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

namespace atomsim {

/**
 * Object on the real line observed through unit-width sensors: y_t = j means
 * z_t lies in [j, j + 1). Initial law N(0, 1), Gaussian random-walk dynamics.
 */
class SensorHmmModel {
public:
    using Point = double;

    SensorHmmModel(double sigma2, std::vector<std::int64_t> observations) : sigma2_(sigma2), y_(std::move(observations))
    {
        if (!(sigma2 > 0.0))
            throw ConfigError("sensor model: sigma2 must be positive");
        if (y_.empty())
            throw ConfigError("sensor model: no observations");
        sd_ = std::sqrt(sigma2);
    }

    std::size_t horizon() const { return y_.size(); }
    double sample_initial(RandomStream& rng) const { return rng.normal(); }
    double sample_transition(std::size_t, double z, RandomStream& rng) const { return rng.normal(z, sd_); }
    double log_potential(std::size_t t, double z) const
    {
        const auto lo = static_cast<double>(y_[t]);
        return (z >= lo && z < lo + 1.0) ? 0.0 : -std::numeric_limits<double>::infinity();
    }
    double log_potential_upper(std::size_t) const { return 0.0; }

    double sigma2() const { return sigma2_; }
    const std::vector<std::int64_t>& observations() const { return y_; }

    std::int64_t max_gap() const
    {
        std::int64_t g = 0;
        for (std::size_t t = 1; t < y_.size(); ++t)
            g = std::max<std::int64_t>(g, std::llabs(y_[t] - y_[t - 1]));
        return g;
    }

    /// Sensor readings of one simulated trajectory.
    static std::vector<std::int64_t> simulate(double sigma2, std::size_t n, RandomStream& rng)
    {
        std::vector<std::int64_t> y;
        y.reserve(n);
        double z = rng.normal();
        const double sd = std::sqrt(sigma2);
        for (std::size_t t = 0; t < n; ++t) {
            if (t > 0)
                z = rng.normal(z, sd);
            y.push_back(static_cast<std::int64_t>(std::floor(z)));
        }
        return y;
    }

    /// Simulate trajectories until one has the requested largest jump between consecutive readings.
    static std::vector<std::int64_t> simulate_with_max_gap(double sigma2, std::size_t n, std::int64_t gap,
                                                           RandomStream& rng, std::size_t max_tries = 1'000'000)
    {
        for (std::size_t i = 0; i < max_tries; ++i) {
            auto y = simulate(sigma2, n, rng);
            if (SensorHmmModel(sigma2, y).max_gap() == gap)
                return y;
        }
        throw ConfigError("sensor model: no simulated data set had max gap " + std::to_string(gap));
    }

private:
    double sigma2_;
    std::vector<std::int64_t> y_;
    double sd_ = 1.0;
};

/**
 * Bound on F for two consecutive readings g cells apart:
 * 1 / P(one step from the near edge of the first cell lands in the second)
 * times the largest ratio of step densities between the two cells,
 * exp(((g + 1)^2 - g^2) / (2 sigma^2)).
 */
inline double sensor_pair_A(std::int64_t gap, double sigma2)
{
    const double g = static_cast<double>(std::llabs(gap));
    const double hit = normal::interval_prob(g, g + 1.0, 0.0, sigma2);
    const double ratio = std::exp(((g + 1.0) * (g + 1.0) - g * g) / (2.0 * sigma2));
    return ratio / hit;
}

/**
 * Data-dependent one-step bound A for the sensor model, from the widest jump
 * between consecutive readings. The first step contributes
 * 1 / mu([y_1, y_1 + 1)) times the density ratio towards y_2.
 */
inline double sensor_A_bound(const SensorHmmModel& m)
{
    const auto& y = m.observations();
    const double first_cell = normal::interval_prob(static_cast<double>(y[0]), static_cast<double>(y[0]) + 1.0, 0.0, 1.0);
    if (y.size() == 1)
        return 1.0 / first_cell;
    const double g12 = static_cast<double>(std::llabs(y[1] - y[0]));
    const double first = std::exp(((g12 + 1.0) * (g12 + 1.0) - g12 * g12) / (2.0 * m.sigma2())) / first_cell;
    return std::max(sensor_pair_A(m.max_gap(), m.sigma2()), first);
}

} // namespace atomsim
