#pragma once

#include "atomsim/errors.hpp"
#include "atomsim/random.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace atomsim {

/**
 * Discrete-time Feynman-Kac model with horizon n.
 *
 * Time indices are zero-based: `sample_initial` draws the point at time 0,
 * `sample_transition(t, z, rng)` draws time t given time t-1 (t >= 1), and
 * `log_potential(t, z)` is log G_t(z), returning -infinity where G vanishes.
 */
template <class M>
concept FeynmanKacModel = requires(const M& m, const typename M::Point& z, std::size_t t, RandomStream& rng) {
    typename M::Point;
    { m.horizon() } -> std::convertible_to<std::size_t>;
    { m.sample_initial(rng) } -> std::convertible_to<typename M::Point>;
    { m.sample_transition(t, z, rng) } -> std::convertible_to<typename M::Point>;
    { m.log_potential(t, z) } -> std::convertible_to<double>;
};

/// Models may also declare a per-step upper bound on log G_t, which is then
/// checked on every evaluation.
template <class M>
concept BoundedPotentialModel = FeynmanKacModel<M> && requires(const M& m, std::size_t t) {
    { m.log_potential_upper(t) } -> std::convertible_to<double>;
};

template <class Z>
using Path = std::vector<Z>;

template <class Z>
struct ParticleSystem {
    std::vector<std::vector<Z>> particles;                  ///< [t][i]
    std::vector<std::vector<std::size_t>> ancestors;        ///< [t][i] = parent index at t-1; empty for t = 0
    std::vector<std::vector<double>> log_potentials;        ///< [t][i] = log G_t(particles[t][i])

    std::size_t horizon() const noexcept { return particles.size(); }
    std::size_t size() const noexcept { return particles.empty() ? 0 : particles.front().size(); }

    /// Ancestral lineage of terminal particle k, from time 0 to n-1.
    std::vector<std::size_t> lineage(std::size_t k) const
    {
        const std::size_t n = horizon();
        std::vector<std::size_t> idx(n);
        idx[n - 1] = k;
        for (std::size_t t = n - 1; t > 0; --t)
            idx[t - 1] = ancestors[t][idx[t]];
        return idx;
    }

    Path<Z> path_of(const std::vector<std::size_t>& lineage) const
    {
        Path<Z> path;
        path.reserve(lineage.size());
        for (std::size_t t = 0; t < lineage.size(); ++t)
            path.push_back(particles[t][lineage[t]]);
        return path;
    }
};

template <class Z>
struct PickedPath {
    std::vector<std::size_t> lineage;
    Path<Z> path;
};

namespace detail {

template <FeynmanKacModel M>
double checked_log_potential(const M& model, std::size_t t, const typename M::Point& z)
{
    const double lg = model.log_potential(t, z);
    if (std::isnan(lg))
        throw ContractViolation("potential evaluated to NaN at step " + std::to_string(t + 1));
    if constexpr (BoundedPotentialModel<M>) {
        if (lg > model.log_potential_upper(t) + 1e-12)
            throw ContractViolation("potential exceeds its declared upper bound at step " + std::to_string(t + 1));
    }
    return lg;
}

/// Weights exp(lw - max lw) with their running cumulative sums.
struct Resampler {
    std::vector<double> cumulative;
    double total = 0.0;

    /// Returns false when every weight is zero.
    bool build(const std::vector<double>& log_weights)
    {
        const double top = *std::max_element(log_weights.begin(), log_weights.end());
        cumulative.resize(log_weights.size());
        if (!(top > -std::numeric_limits<double>::infinity()))
            return false;
        double acc = 0.0;
        for (std::size_t i = 0; i < log_weights.size(); ++i) {
            acc += std::exp(log_weights[i] - top);
            cumulative[i] = acc;
        }
        total = acc;
        return true;
    }

    std::size_t draw(RandomStream& rng) const
    {
        const double u = rng.uniform() * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        if (it == cumulative.end()) {
            // u landed on the rounding boundary; fall back to the last index with positive weight.
            std::size_t i = cumulative.size() - 1;
            while (i > 0 && cumulative[i] == cumulative[i - 1])
                --i;
            return i;
        }
        return static_cast<std::size_t>(it - cumulative.begin());
    }
};

inline double log_mean_exp(const std::vector<double>& lw)
{
    const double top = *std::max_element(lw.begin(), lw.end());
    if (!(top > -std::numeric_limits<double>::infinity()))
        return -std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (double v : lw)
        s += std::exp(v - top);
    return top + std::log(s / static_cast<double>(lw.size()));
}

} // namespace detail

/// Particle filter with multinomial resampling at every step.
template <FeynmanKacModel M>
ParticleSystem<typename M::Point> run_smc(const M& model, std::size_t N, RandomStream& rng)
{
    if (N < 1)
        throw ConfigError("run_smc: need at least one particle");
    const std::size_t n = model.horizon();
    if (n < 1)
        throw ConfigError("run_smc: horizon must be positive");
    ParticleSystem<typename M::Point> v;
    v.particles.resize(n);
    v.ancestors.resize(n);
    v.log_potentials.resize(n);
    detail::Resampler resampler;

    for (std::size_t t = 0; t < n; ++t) {
        auto& zs = v.particles[t];
        zs.reserve(N);
        if (t == 0) {
            for (std::size_t i = 0; i < N; ++i)
                zs.push_back(model.sample_initial(rng));
        } else {
            if (!resampler.build(v.log_potentials[t - 1]))
                throw ParticleDeath("all particles have zero potential", t - 1);
            auto& anc = v.ancestors[t];
            anc.resize(N);
            for (std::size_t i = 0; i < N; ++i)
                anc[i] = resampler.draw(rng);
            const auto& prev = v.particles[t - 1];
            for (std::size_t i = 0; i < N; ++i)
                zs.push_back(model.sample_transition(t, prev[anc[i]], rng));
        }
        auto& lg = v.log_potentials[t];
        lg.resize(N);
        for (std::size_t i = 0; i < N; ++i)
            lg[i] = detail::checked_log_potential(model, t, zs[i]);
    }
    if (!resampler.build(v.log_potentials[n - 1]))
        throw ParticleDeath("all particles have zero potential", n - 1);
    return v;
}

/// Draw a terminal index proportionally to the final potentials and trace its lineage.
template <class Z>
PickedPath<Z> pick_path(const ParticleSystem<Z>& v, RandomStream& rng)
{
    detail::Resampler resampler;
    const std::size_t n = v.horizon();
    if (!resampler.build(v.log_potentials[n - 1]))
        throw ParticleDeath("all terminal potentials are zero", n - 1);
    PickedPath<Z> out;
    out.lineage = v.lineage(resampler.draw(rng));
    out.path = v.path_of(out.lineage);
    return out;
}

template <class Z>
struct ConditionalSystem {
    std::vector<std::size_t> lineage; ///< slots K_1..K_n holding the reference path
    ParticleSystem<Z> system;
};

/**
 * Conditional particle filter: the reference path occupies slot K_t at each
 * time, with K_t drawn independently and uniformly; all other particles
 * evolve as in run_smc.
 */
template <FeynmanKacModel M>
ConditionalSystem<typename M::Point> run_csmc(const M& model, std::size_t N, const Path<typename M::Point>& ref,
                                              RandomStream& rng)
{
    if (N < 1)
        throw ConfigError("run_csmc: need at least one particle");
    const std::size_t n = model.horizon();
    if (ref.size() != n)
        throw ConfigError("run_csmc: reference path length differs from the horizon");
    ConditionalSystem<typename M::Point> out;
    auto& k = out.lineage;
    k.resize(n);
    for (auto& slot : k)
        slot = rng.index(N);

    auto& v = out.system;
    v.particles.resize(n);
    v.ancestors.resize(n);
    v.log_potentials.resize(n);
    detail::Resampler resampler;

    for (std::size_t t = 0; t < n; ++t) {
        auto& zs = v.particles[t];
        zs.reserve(N);
        if (t == 0) {
            for (std::size_t i = 0; i < N; ++i)
                zs.push_back(i == k[0] ? ref[0] : model.sample_initial(rng));
        } else {
            auto& anc = v.ancestors[t];
            anc.resize(N);
            if (N > 1 && !resampler.build(v.log_potentials[t - 1]))
                throw ParticleDeath("all particles have zero potential in conditional SMC", t - 1);
            for (std::size_t i = 0; i < N; ++i)
                anc[i] = i == k[t] ? k[t - 1] : resampler.draw(rng);
            const auto& prev = v.particles[t - 1];
            for (std::size_t i = 0; i < N; ++i)
                zs.push_back(i == k[t] ? ref[t] : model.sample_transition(t, prev[anc[i]], rng));
        }
        auto& lg = v.log_potentials[t];
        lg.resize(N);
        for (std::size_t i = 0; i < N; ++i)
            lg[i] = detail::checked_log_potential(model, t, zs[i]);
    }
    return out;
}

/// One step of the iterated conditional SMC kernel.
template <FeynmanKacModel M>
Path<typename M::Point> icsmc_step(const M& model, std::size_t N, const Path<typename M::Point>& x, RandomStream& rng)
{
    auto cond = run_csmc(model, N, x, rng);
    return pick_path(cond.system, rng).path;
}

/// log of prod_t (1/N) sum_i G_t(particle_t^i), the usual normalizing-constant estimate.
template <class Z>
double estimate_log_nc(const ParticleSystem<Z>& v)
{
    double total = 0.0;
    for (std::size_t t = 0; t < v.horizon(); ++t) {
        const double step = detail::log_mean_exp(v.log_potentials[t]);
        if (!(step > -std::numeric_limits<double>::infinity()))
            throw ParticleDeath("zero total weight in normalizing-constant estimate", t);
        total += step;
    }
    return total;
}

/// Terminal-weighted average of f over the ancestral paths.
template <class Z, class F>
double estimate_pi_f(const ParticleSystem<Z>& v, F&& f)
{
    const std::size_t n = v.horizon();
    const auto& lg = v.log_potentials[n - 1];
    const double top = *std::max_element(lg.begin(), lg.end());
    if (!(top > -std::numeric_limits<double>::infinity()))
        throw ParticleDeath("all terminal potentials are zero", n - 1);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < lg.size(); ++k) {
        const double w = std::exp(lg[k] - top);
        if (w == 0.0)
            continue;
        num += w * f(v.path_of(v.lineage(k)));
        den += w;
    }
    return num / den;
}

/// Unbiased estimate of gamma_n(f): the normalizing-constant estimate times the weighted average of f.
template <class Z, class F>
double estimate_gamma_f(const ParticleSystem<Z>& v, F&& f)
{
    return std::exp(estimate_log_nc(v)) * estimate_pi_f(v, std::forward<F>(f));
}

/**
 * Given an exact draw from the path measure, run conditional SMC around it and
 * return the terminal-weighted average of f over all N paths. The result is
 * unbiased for pi(f).
 */
template <FeynmanKacModel M, class F>
double self_normalized_unbiased(const Path<typename M::Point>& perfect_x, const M& model, std::size_t N, F&& f,
                                RandomStream& rng)
{
    auto cond = run_csmc(model, N, perfect_x, rng);
    return estimate_pi_f(cond.system, std::forward<F>(f));
}

/// Ingredients of the regenerative unbiased estimator of pi(f).
struct RegenEstimatorSpec {
    /// Draws M with P(M = m) = P(tau >= m) / E(tau).
    std::function<std::uint64_t(RandomStream&)> first_regen_sampler;
    std::function<std::uint64_t(RandomStream&)> g_sample;
    std::function<double(std::uint64_t)> g_pmf;
    /// Unbiased estimate of gamma_k(f).
    std::function<double(std::uint64_t, RandomStream&)> gamma_f_estimator;
};

/// Zero unless M = 1; otherwise an importance-sampling estimate Z / g(K) with K ~ g.
inline double unbiased_pi_f_regen(const RegenEstimatorSpec& spec, RandomStream& rng)
{
    if (spec.first_regen_sampler(rng) != 1)
        return 0.0;
    const std::uint64_t k = spec.g_sample(rng);
    const double gk = spec.g_pmf(k);
    if (!(gk > 0.0))
        throw ConfigError("unbiased_pi_f_regen: g(K) = 0 for a drawn K = " + std::to_string(k));
    return spec.gamma_f_estimator(k, rng) / gk;
}

} // namespace atomsim
