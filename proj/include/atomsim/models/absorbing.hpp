#pragma once

#include "atomsim/errors.hpp"
#include "atomsim/models/normal.hpp"
#include "atomsim/random.hpp"

#include <cmath>
#include <limits>

namespace atomsim {

/// A particle diffusing as a Gaussian random walk, killed when it leaves [lo, hi].
class AbsorbingMediumModel {
public:
    using Point = double;

    AbsorbingMediumModel(double lo, double hi, double sigma2, std::size_t n) : lo_(lo), hi_(hi), sigma2_(sigma2), n_(n)
    {
        if (!(hi > lo))
            throw ConfigError("absorbing medium: need lo < hi");
        if (!(sigma2 > 0.0))
            throw ConfigError("absorbing medium: sigma2 must be positive");
        if (n < 1)
            throw ConfigError("absorbing medium: horizon must be positive");
        sd_ = std::sqrt(sigma2);
    }

    std::size_t horizon() const { return n_; }
    double sample_initial(RandomStream& rng) const { return rng.uniform(); }
    double sample_transition(std::size_t, double z, RandomStream& rng) const { return rng.normal(z, sd_); }
    double log_potential(std::size_t, double z) const
    {
        return (z >= lo_ && z <= hi_) ? 0.0 : -std::numeric_limits<double>::infinity();
    }
    double log_potential_upper(std::size_t) const { return 0.0; }

    double lo() const { return lo_; }
    double hi() const { return hi_; }
    double sigma2() const { return sigma2_; }
    double width() const { return hi_ - lo_; }

private:
    double lo_;
    double hi_;
    double sigma2_;
    std::size_t n_;
    double sd_ = 1.0;
};

/// The two factors of the m-step bound on F for the absorbing medium.
struct MStepFactors {
    double potential = 1.0; ///< product of sup G over lower bounds on the predicted potentials
    double kernel = 1.0;    ///< sup of the m-step kernel density over a lower bound on the predictive density

    double product() const { return potential * kernel; }
};

/// inf over z in S of M(z, S): the walk started at an endpoint stays in S.
inline double absorbing_min_stay_prob(const AbsorbingMediumModel& m)
{
    return normal::interval_prob(0.0, m.width(), 0.0, m.sigma2());
}

/**
 * min over z_p, z in [0, L] of the two-step density through S,
 * int_S N(u; z_p, s2) N(z; u, s2) du = N(z; z_p, 2 s2) P(N((z_p + z) / 2, s2 / 2) in S).
 * For a fixed distance d = |z - z_p| the probability is smallest when the
 * midpoint sits at d / 2, leaving a one-dimensional search over d.
 */
inline double absorbing_two_step_min_density(double L, double s2)
{
    auto f = [L, s2](double d) {
        return normal::pdf(d, 0.0, 2.0 * s2) * normal::interval_prob(0.0, L, d / 2.0, s2 / 2.0);
    };
    constexpr int kGrid = 4096;
    int best = 0;
    double best_val = f(0.0);
    for (int i = 1; i <= kGrid; ++i) {
        const double v = f(L * i / kGrid);
        if (v < best_val) {
            best_val = v;
            best = i;
        }
    }
    // Golden-section refinement on the bracketing grid cells.
    double a = L * std::max(best - 1, 0) / kGrid;
    double b = L * std::min(best + 1, kGrid) / kGrid;
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 100; ++it) {
        const double c = b - r * (b - a);
        const double d = a + r * (b - a);
        if (f(c) < f(d))
            b = d;
        else
            a = c;
    }
    return std::min(best_val, f(0.5 * (a + b)));
}

/**
 * Factors of the m-step bound on F (m = 1 or 2) for an interval S of width L.
 *
 * m = 1: 1 / inf M(z, S) and the density ratio M(z, z'') / M(z', z'') which
 * is largest, exp(L^2 / (2 sigma^2)), when the points sit at opposite ends.
 *
 * m = 2: (1 / inf M(z, S))^2 and the two-step density N(0; 0, 2 sigma^2)
 * over a lower bound on the predictive density two steps ahead. That lower
 * bound is min over z_p, z in S of the surviving two-step density,
 * N(z; z_p, 2 sigma^2) P(midpoint draw in S), divided by sup M(z, S).
 */
inline MStepFactors absorbing_m_step_factors(const AbsorbingMediumModel& m, int steps)
{
    const double L = m.width();
    const double s2 = m.sigma2();
    const double stay = absorbing_min_stay_prob(m);
    MStepFactors f;
    if (steps == 1) {
        f.potential = 1.0 / stay;
        f.kernel = std::exp(L * L / (2.0 * s2));
        return f;
    }
    if (steps == 2) {
        f.potential = 1.0 / (stay * stay);
        const double max_stay = normal::interval_prob(-L / 2.0, L / 2.0, 0.0, s2);
        const double lower = absorbing_two_step_min_density(L, s2) / max_stay;
        f.kernel = normal::pdf(0.0, 0.0, 2.0 * s2) / lower;
        return f;
    }
    throw ConfigError("absorbing_m_step_factors: only m = 1 and m = 2 have closed forms");
}

/**
 * One-step bound A on F for the absorbing medium:
 * (1 / M(0, [0, L])) * M(L, L) / M(0, L) for S = [lo, lo + L], translated to
 * the origin. When S does not contain the support [0, 1] of the initial law,
 * the first-step term 1 / mu(S) is also taken into account.
 */
inline double absorbing_A_bound(const AbsorbingMediumModel& m)
{
    double A = absorbing_m_step_factors(m, 1).product();
    const double mu_mass = std::max(0.0, std::min(1.0, m.hi()) - std::max(0.0, m.lo()));
    if (!(mu_mass > 0.0))
        throw ConfigError("absorbing_A_bound: S does not meet the support of the initial law");
    if (mu_mass < 1.0)
        A = std::max(A, std::exp(m.width() * m.width() / (2.0 * m.sigma2())) / mu_mass);
    return A;
}

/// Particle count 7 (A - 1) n suggested for an i-cSMC minorization constant of about 0.75.
inline std::size_t recommended_particles(double A, std::size_t n)
{
    return static_cast<std::size_t>(std::ceil(7.0 * (A - 1.0) * static_cast<double>(n)));
}

} // namespace atomsim
