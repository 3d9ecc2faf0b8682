#pragma once

// Small fixed instances with exact answers, used by the experiment runner and the tests.

#include "atomsim/models/finite.hpp"
#include "atomsim/random.hpp"

#include <cmath>

#include <vector>

namespace atomsim::reference {

/// Five-state chain with atom 0 and Pi(x, 0) >= 0.3 for every x.
inline FiniteChain five_state_chain()
{
    return FiniteChain(
        {
            {0.30, 0.30, 0.20, 0.10, 0.10},
            {0.40, 0.10, 0.30, 0.10, 0.10},
            {0.35, 0.05, 0.20, 0.30, 0.10},
            {0.50, 0.10, 0.10, 0.10, 0.20},
            {0.30, 0.20, 0.20, 0.20, 0.10},
        },
        0);
}

/// Three-state Feynman-Kac model with horizon n (at most 3) and varied potentials.
inline FiniteFKModel small_fk_model(std::size_t n = 3)
{
    Matrix M{{0.6, 0.3, 0.1}, {0.2, 0.5, 0.3}, {0.3, 0.3, 0.4}};
    Matrix G{{1.0, 0.5, 0.2}, {0.3, 1.0, 0.6}, {0.7, 0.2, 0.9}};
    G.resize(n);
    return FiniteFKModel({0.5, 0.3, 0.2}, M, G);
}

/// Same dynamics with unit potentials, so the path measure is the prior.
inline FiniteFKModel flat_fk_model(std::size_t n = 3)
{
    auto m = small_fk_model(n);
    return FiniteFKModel(m.mu(), m.transition(), Matrix(n, std::vector<double>(3, 1.0)));
}

/// Exact increments gamma_t(1) / gamma_{t-1}(1) of a finite model.
inline std::vector<double> exact_increments(const FiniteFKModel& m)
{
    const auto g = finite_gamma_sequence(m);
    std::vector<double> psi{g[0]};
    for (std::size_t t = 1; t < g.size(); ++t)
        psi.push_back(g[t] / g[t - 1]);
    return psi;
}

/**
 * Toy path model for the regenerative estimator: a path of length k starts at
 * 0, then moves uniformly on {1, 2, 3}; every step but the last has potential
 * 1 - q and the last has potential 1. With f the final point and the horizon
 * drawn from the first-regeneration law Geometric(q), pi(f) = 2 (1 - q).
 */
struct RegenToyModel {
    using Point = int;
    std::size_t k = 1;
    double q = 0.5;

    std::size_t horizon() const { return k; }
    int sample_initial(RandomStream&) const { return 0; }
    int sample_transition(std::size_t, int, RandomStream& rng) const { return 1 + static_cast<int>(rng.index(3)); }
    double log_potential(std::size_t t, int) const { return t + 1 < k ? std::log1p(-q) : 0.0; }
};

} // namespace atomsim::reference
