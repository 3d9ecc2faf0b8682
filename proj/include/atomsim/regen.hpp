#pragma once

#include "atomsim/errors.hpp"
#include "atomsim/factory.hpp"
#include "atomsim/random.hpp"

#include <concepts>
#include <cstdint>
#include <string>
#include <vector>

namespace atomsim {

/// A Markov kernel Pi with a distinguished singleton atom. Implementations
/// must be immutable after construction so tours can share them.
template <class K>
concept AtomicKernel = requires(const K& k, const typename K::State& x, RandomStream& rng) {
    typename K::State;
    { k.sample(x, rng) } -> std::convertible_to<typename K::State>;
    { k.atom() } -> std::convertible_to<typename K::State>;
    { k.is_atom(x) } -> std::convertible_to<bool>;
};

/// Optional hook: kernels may expose `describe(state)` for error messages.
template <class K>
concept DescribableKernel = AtomicKernel<K> && requires(const K& k, const typename K::State& x) {
    { k.describe(x) } -> std::convertible_to<std::string>;
};

struct CostRecord {
    std::uint64_t kernel_draws = 0;  ///< draws from Pi used as chain moves
    std::uint64_t subcoin_flips = 0; ///< (1-p)/(1-eps) coins flipped
    std::uint64_t raw_flips = 0;     ///< draws from Pi used as p-coin flips

    CostRecord& operator+=(const CostRecord& o)
    {
        kernel_draws += o.kernel_draws;
        subcoin_flips += o.subcoin_flips;
        raw_flips += o.raw_flips;
        return *this;
    }
    friend bool operator==(const CostRecord&, const CostRecord&) = default;
};

struct RegenBudgets {
    std::uint64_t rejection = 1'000'000; ///< draws per residual sample
    std::uint64_t tour = 10'000'000;     ///< states per tour
};

enum class SamplerAlgorithm { imputation, multigamma };

inline const char* to_string(SamplerAlgorithm a)
{
    return a == SamplerAlgorithm::imputation ? "imputation" : "multigamma";
}

template <class State>
struct PerfectSampleReport {
    State sample;
    SamplerAlgorithm algorithm = SamplerAlgorithm::imputation;
    CostRecord cost;
    std::uint64_t steps = 0; ///< chain steps simulated (tour length of the split chain)
};

template <class State>
struct Tour {
    std::vector<State> states; ///< Y_1 .. Y_tau; the last one is the atom
    CostRecord cost;

    std::size_t length() const noexcept { return states.size(); }
};

namespace detail {

template <class K>
std::string state_context(const K& kernel, const typename K::State& x)
{
    if constexpr (DescribableKernel<K>)
        return " at state " + std::string(kernel.describe(x));
    else
        return {};
}

/// p(x)-coin: a fresh draw from Pi(x, .) tested for the atom.
template <AtomicKernel K>
auto atom_hit_coin(const K& kernel, const typename K::State& x)
{
    return [&kernel, &x](RandomStream& rng) { return kernel.is_atom(kernel.sample(x, rng)); };
}

inline void absorb(CostRecord& cost, const FactoryStats& stats)
{
    cost.subcoin_flips += stats.subcoin_flips;
    cost.raw_flips += stats.raw_flips;
}

} // namespace detail

/// Draw from Pi(x, .) conditioned to avoid the atom, by rejection.
template <AtomicKernel K>
typename K::State sample_residual(const K& kernel, const typename K::State& x, RandomStream& rng,
                                  std::uint64_t* draws = nullptr, std::uint64_t budget = 1'000'000)
{
    for (std::uint64_t n = 1; n <= budget; ++n) {
        auto y = kernel.sample(x, rng);
        if (draws)
            ++*draws;
        if (!kernel.is_atom(y))
            return y;
    }
    throw DrawBudgetExceeded("residual sampling: Pi(x, atom) appears to be 1" + detail::state_context(kernel, x),
                             budget);
}

/**
 * Exact draw from the invariant law by simulating one tour of the split chain
 * and returning the state just before the regeneration.
 *
 * Whenever the chain lands on the atom the regeneration indicator is an
 * eps/p(x)-coin built from fresh draws of Pi(x, .); those draws are never
 * reused as chain moves.
 */
template <AtomicKernel K>
PerfectSampleReport<typename K::State> perfect_sample_imputation(const K& kernel, const FactoryConfig& cfg,
                                                                  RandomStream& rng, const RegenBudgets& budgets = {})
{
    cfg.validate();
    using State = typename K::State;
    PerfectSampleReport<State> out{kernel.atom(), SamplerAlgorithm::imputation, {}, 0};
    FactoryStats stats;
    State prev = kernel.atom();
    for (;;) {
        if (out.steps >= budgets.tour)
            throw DrawBudgetExceeded("imputation sampler: tour budget exhausted", out.steps);
        State next = kernel.sample(prev, rng);
        ++out.cost.kernel_draws;
        ++out.steps;
        if (kernel.is_atom(next)) {
            bool regenerate = false;
            try {
                regenerate = flip_eps_over_p_coin(detail::atom_hit_coin(kernel, prev), cfg, rng, &stats);
            } catch (const BudgetExceeded& e) {
                throw e.with_context(detail::state_context(kernel, prev) + "; beta is probably larger than inf p(x)");
            }
            if (regenerate) {
                out.sample = std::move(prev);
                detail::absorb(out.cost, stats);
                return out;
            }
        }
        prev = std::move(next);
    }
}

/**
 * Exact draw from the invariant law via the multigamma representation:
 * N ~ Geometric(eps) steps of the residual kernel started from the atom.
 * Each residual step is a (1-p)/(1-eps)-coin choosing between a rejection
 * draw that avoids the atom and a jump to the atom.
 */
template <AtomicKernel K>
PerfectSampleReport<typename K::State> perfect_sample_multigamma(const K& kernel, const FactoryConfig& cfg,
                                                                  RandomStream& rng, const RegenBudgets& budgets = {})
{
    cfg.validate();
    using State = typename K::State;
    PerfectSampleReport<State> out{kernel.atom(), SamplerAlgorithm::multigamma, {}, 0};
    FactoryStats stats;
    const std::uint64_t n = rng.geometric(cfg.eps);
    if (n - 1 > budgets.tour)
        throw DrawBudgetExceeded("multigamma sampler: tour budget exhausted", n);
    State x = kernel.atom();
    for (std::uint64_t step = 1; step < n; ++step) {
        bool leave_atom = false;
        try {
            leave_atom = flip_one_minus_p_coin(detail::atom_hit_coin(kernel, x), cfg, rng, &stats);
        } catch (const BudgetExceeded& e) {
            throw e.with_context(detail::state_context(kernel, x) + "; beta is probably larger than inf p(x)");
        }
        if (leave_atom)
            x = sample_residual(kernel, x, rng, &out.cost.kernel_draws, budgets.rejection);
        else
            x = kernel.atom();
        ++out.steps;
    }
    out.sample = std::move(x);
    detail::absorb(out.cost, stats);
    return out;
}

template <AtomicKernel K>
PerfectSampleReport<typename K::State> perfect_sample(const K& kernel, SamplerAlgorithm algo,
                                                      const FactoryConfig& cfg, RandomStream& rng,
                                                      const RegenBudgets& budgets = {})
{
    return algo == SamplerAlgorithm::imputation ? perfect_sample_imputation(kernel, cfg, rng, budgets)
                                                : perfect_sample_multigamma(kernel, cfg, rng, budgets);
}

/// One excursion of the chain from the atom back to the atom.
template <AtomicKernel K>
Tour<typename K::State> simulate_tour(const K& kernel, RandomStream& rng, std::uint64_t budget = 10'000'000)
{
    Tour<typename K::State> tour;
    auto x = kernel.atom();
    for (;;) {
        if (tour.states.size() >= budget)
            throw DrawBudgetExceeded("tour exceeded its length budget; the atom may be nearly inaccessible",
                                     tour.states.size());
        x = kernel.sample(x, rng);
        ++tour.cost.kernel_draws;
        const bool done = kernel.is_atom(x);
        tour.states.push_back(x);
        if (done)
            return tour;
    }
}

} // namespace atomsim
