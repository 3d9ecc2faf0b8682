#pragma once

#include "atomsim/errors.hpp"
#include "atomsim/random.hpp"
#include "atomsim/regen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

namespace atomsim {

template <class State>
struct TourCollection {
    std::vector<Tour<State>> tours;
    std::vector<std::uint8_t> failed; ///< 1 where the tour hit its length budget
    std::uint64_t master_seed = 0;
    std::size_t worker_count = 1;

    std::size_t size() const noexcept { return tours.size(); }
    std::size_t failure_count() const
    {
        return static_cast<std::size_t>(std::count(failed.begin(), failed.end(), std::uint8_t{1}));
    }
    static std::uint64_t tour_seed(std::uint64_t master, std::size_t index) { return derive_seed(master, index); }
};

/// Simulate one tour on the stream derived from (master_seed, index).
template <AtomicKernel K>
Tour<typename K::State> simulate_indexed_tour(const K& kernel, std::uint64_t master_seed, std::size_t index,
                                              std::uint64_t budget = 10'000'000)
{
    RandomStream rng(derive_seed(master_seed, index));
    return simulate_tour(kernel, rng, budget);
}

/**
 * Simulate `n_tours` independent tours on a pool of `workers` threads.
 * Tour i depends only on (master_seed, i), so the collection is the same for
 * any number of workers; indices are handed out from a shared counter.
 */
template <AtomicKernel K>
TourCollection<typename K::State> run_parallel_tours(const K& kernel, std::size_t n_tours, std::size_t workers,
                                                     std::uint64_t master_seed, std::uint64_t budget = 10'000'000)
{
    if (n_tours < 1)
        throw ConfigError("run_parallel_tours: need at least one tour");
    if (workers < 1)
        throw ConfigError("run_parallel_tours: need at least one worker");
    TourCollection<typename K::State> c;
    c.tours.resize(n_tours);
    c.failed.assign(n_tours, 0);
    c.master_seed = master_seed;
    c.worker_count = workers;

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next.fetch_add(1); i < n_tours; i = next.fetch_add(1)) {
            try {
                c.tours[i] = simulate_indexed_tour(kernel, master_seed, i, budget);
            } catch (const DrawBudgetExceeded&) {
                c.tours[i] = {};
                c.failed[i] = 1;
            }
        }
    };
    const std::size_t spawned = std::min(workers, n_tours);
    if (spawned == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(spawned);
        for (std::size_t w = 0; w < spawned; ++w)
            pool.emplace_back(work);
        for (auto& t : pool)
            t.join();
    }
    return c;
}

/// Regenerative estimate of pi(f): sum of f over all tour states divided by total length.
template <class State, class F>
double stitch_tours(const TourCollection<State>& c, F&& f, bool drop_failed = false)
{
    if (c.tours.empty())
        throw ConfigError("stitch_tours: empty collection");
    if (!drop_failed && c.failure_count() > 0)
        throw ConfigError("stitch_tours: collection has " + std::to_string(c.failure_count()) + " failed tours");
    double sum = 0.0;
    std::uint64_t length = 0;
    for (std::size_t i = 0; i < c.tours.size(); ++i) {
        if (c.failed[i])
            continue;
        for (const auto& s : c.tours[i].states)
            sum += f(s);
        length += c.tours[i].length();
    }
    if (length == 0)
        throw ConfigError("stitch_tours: no usable tours");
    return sum / static_cast<double>(length);
}

/// Harmonic number H_n.
inline double harmonic_number(std::size_t n)
{
    double h = 0.0;
    for (std::size_t k = n; k >= 1; --k)
        h += 1.0 / static_cast<double>(k);
    return h;
}

struct GeometricMaxBounds {
    double lower = 0.0; ///< H_n / lambda
    double upper = 0.0; ///< 1 + H_n / lambda
};

/// Bounds on E[max] of n i.i.d. Geometric(q) tour lengths, with lambda = -log(1 - q).
inline GeometricMaxBounds geometric_max_bounds(double q, std::size_t n)
{
    if (!(q > 0.0 && q < 1.0))
        throw ConfigError("geometric_max_bounds: q must lie in (0, 1)");
    const double lambda = -std::log1p(-q);
    const double h = harmonic_number(n);
    return {h / lambda, 1.0 + h / lambda};
}

/// David's bound on E[max] of n i.i.d. variables with the given mean and variance.
inline double david_max_bound(double mean, double variance, std::size_t n)
{
    const double nn = static_cast<double>(n);
    return mean + (nn - 1.0) * std::sqrt(std::max(variance, 0.0) / (2.0 * nn - 1.0));
}

struct TourStats {
    std::size_t count = 0;
    std::uint64_t max_length = 0;
    double mean_length = 0.0;
    double variance = 0.0;       ///< empirical second moment minus squared mean
    double david_bound = 0.0;
    GeometricMaxBounds geometric; ///< evaluated at q = 1 / mean_length
};

template <class State>
TourStats max_tour_stats(const TourCollection<State>& c)
{
    TourStats s;
    double m1 = 0.0;
    double m2 = 0.0;
    for (std::size_t i = 0; i < c.tours.size(); ++i) {
        if (c.failed[i])
            continue;
        const auto len = static_cast<std::uint64_t>(c.tours[i].length());
        s.max_length = std::max(s.max_length, len);
        m1 += static_cast<double>(len);
        m2 += static_cast<double>(len) * static_cast<double>(len);
        ++s.count;
    }
    if (s.count == 0)
        throw ConfigError("max_tour_stats: no usable tours");
    const double n = static_cast<double>(s.count);
    s.mean_length = m1 / n;
    s.variance = m2 / n - s.mean_length * s.mean_length;
    s.david_bound = david_max_bound(s.mean_length, s.variance, s.count);
    if (s.mean_length > 1.0)
        s.geometric = geometric_max_bounds(1.0 / s.mean_length, s.count);
    else
        s.geometric = {1.0, 1.0};
    return s;
}

} // namespace atomsim
