#pragma once

#include "atomsim/errors.hpp"
#include "atomsim/factory.hpp"
#include "atomsim/random.hpp"
#include "atomsim/regen.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace atomsim {

enum class DiagnosticVerdict { passed, budget_exceeded };

inline const char* to_string(DiagnosticVerdict v)
{
    return v == DiagnosticVerdict::passed ? "passed" : "budget_exceeded";
}

struct DiagnosticOutcome {
    std::optional<std::uint64_t> stopped_at; ///< first n with mean of n flips above beta
    std::uint64_t flips_used = 0;
    std::uint64_t budget = 0;
    DiagnosticVerdict verdict = DiagnosticVerdict::budget_exceeded;
};

/// Default number of flips allowed per diagnostic run.
inline std::uint64_t default_diagnostic_budget(double beta)
{
    return static_cast<std::uint64_t>(std::ceil(50.0 * (1.0 - beta) / beta));
}

/**
 * Flip the coin until the running mean exceeds beta. When p > beta this
 * stops quickly; when p < beta it may never stop, so the run is capped.
 */
template <class Coin>
DiagnosticOutcome run_beta_diagnostic(Coin&& coin, double beta, std::uint64_t budget, RandomStream& rng)
{
    if (!(beta > 0.0 && beta < 1.0))
        throw ConfigError("run_beta_diagnostic: beta must lie in (0, 1)");
    if (budget < 1)
        throw ConfigError("run_beta_diagnostic: budget must be positive");
    DiagnosticOutcome out;
    out.budget = budget;
    std::uint64_t heads = 0;
    for (std::uint64_t n = 1; n <= budget; ++n) {
        heads += coin(rng) ? 1 : 0;
        out.flips_used = n;
        if (static_cast<double>(heads) > beta * static_cast<double>(n)) {
            out.stopped_at = n;
            out.verdict = DiagnosticVerdict::passed;
            return out;
        }
    }
    return out;
}

/// Probability that the diagnostic never stops when beta = 1/m and p < 1/m.
inline double prob_never_stop(double p, std::uint64_t m)
{
    if (m < 2)
        throw ConfigError("prob_never_stop: m must be at least 2");
    const double cap = 1.0 / static_cast<double>(m);
    if (!(p >= 0.0) || !(p < cap))
        throw ConfigError("prob_never_stop: need 0 <= p < 1/m");
    return 1.0 - p * static_cast<double>(m - 1) / (1.0 - p);
}

/// Total-variation bound between the target and the law produced with eps_used > eps_true.
inline double tv_sensitivity_bound(double eps_true, double eps_used)
{
    if (!(eps_true > 0.0))
        throw ConfigError("tv_sensitivity_bound: eps_true must be positive");
    if (eps_used < eps_true)
        return 0.0;
    return 1.0 - eps_true / eps_used;
}

/// One-sided Clopper-Pearson lower confidence bound on a binomial proportion.
inline double clopper_pearson_lower(std::uint64_t successes, std::uint64_t trials, double confidence)
{
    if (trials == 0 || successes > trials)
        throw ConfigError("clopper_pearson_lower: need 0 <= successes <= trials, trials > 0");
    if (successes == 0)
        return 0.0;
    const double alpha = 1.0 - confidence;
    return boost::math::ibeta_inv(static_cast<double>(successes), static_cast<double>(trials - successes + 1), alpha);
}

/// States visited by a chain started at the atom, keeping every `thin`-th one.
template <AtomicKernel K>
std::vector<typename K::State> pilot_states(const K& kernel, std::size_t count, std::size_t thin, RandomStream& rng)
{
    std::vector<typename K::State> out;
    out.reserve(count);
    auto x = kernel.atom();
    thin = std::max<std::size_t>(thin, 1);
    while (out.size() < count) {
        for (std::size_t i = 0; i < thin; ++i)
            x = kernel.sample(x, rng);
        out.push_back(x);
    }
    return out;
}

/// Smallest per-state Clopper-Pearson lower bound on Pi(x, atom) over the probe states.
template <AtomicKernel K>
double estimate_p_lower(const K& kernel, const std::vector<typename K::State>& probe_states,
                        std::uint64_t flips_per_state, RandomStream& rng, double confidence = 0.99)
{
    if (probe_states.empty())
        throw ConfigError("estimate_p_lower: no probe states");
    if (flips_per_state < 1)
        throw ConfigError("estimate_p_lower: need at least one flip per state");
    double lowest = 1.0;
    for (const auto& x : probe_states) {
        std::uint64_t hits = 0;
        for (std::uint64_t i = 0; i < flips_per_state; ++i)
            hits += kernel.is_atom(kernel.sample(x, rng)) ? 1 : 0;
        lowest = std::min(lowest, clopper_pearson_lower(hits, flips_per_state, confidence));
    }
    return lowest;
}

/**
 * Kernel wrapper that runs the beta diagnostic whenever the wrapped sampler
 * draws from a state different from the previous one. The diagnostic uses
 * its own stream, so the sampler's draws are unchanged, and its flips are
 * counted separately. Throws DiagnosticFailure when a run hits its budget.
 * One instance must not be shared between threads.
 */
template <AtomicKernel K>
class DiagnosedKernel {
public:
    using State = typename K::State;

    DiagnosedKernel(const K& inner, double beta, std::uint64_t budget, std::uint64_t seed)
        : inner_(inner), beta_(beta), budget_(budget), rng_(seed)
    {
        if (!(beta > 0.0 && beta < 1.0))
            throw ConfigError("DiagnosedKernel: beta must lie in (0, 1)");
        if (budget < 1)
            throw ConfigError("DiagnosedKernel: budget must be positive");
    }

    State sample(const State& x, RandomStream& rng) const
    {
        if (!last_ || !(*last_ == x)) {
            check(x);
            last_ = x;
        }
        return inner_.sample(x, rng);
    }
    State atom() const { return inner_.atom(); }
    bool is_atom(const State& x) const { return inner_.is_atom(x); }

    std::uint64_t runs() const noexcept { return runs_; }
    std::uint64_t flips() const noexcept { return flips_; }

private:
    void check(const State& x) const
    {
        const auto out = run_beta_diagnostic(detail::atom_hit_coin(inner_, x), beta_, budget_, rng_);
        ++runs_;
        flips_ += out.flips_used;
        if (out.verdict != DiagnosticVerdict::passed)
            throw DiagnosticFailure("beta diagnostic did not stop" + detail::state_context(inner_, x) +
                                        "; Pi(x, atom) is probably below beta = " + std::to_string(beta_),
                                    out.flips_used);
    }

    const K& inner_;
    double beta_;
    std::uint64_t budget_;
    mutable RandomStream rng_;
    mutable std::optional<State> last_;
    mutable std::uint64_t runs_ = 0;
    mutable std::uint64_t flips_ = 0;
};

} // namespace atomsim
