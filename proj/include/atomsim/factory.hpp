#pragma once

#include "atomsim/errors.hpp"
#include "atomsim/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>

namespace atomsim {

/**
 * A source of i.i.d. Bernoulli(p) bits with p unknown to the consumer.
 *
 * Wraps an arbitrary flip action and counts invocations. `true_p` is only
 * filled in for synthetic coins so that tests can compare against it.
 */
class CoinSource {
public:
    using FlipFn = std::function<bool(RandomStream&)>;

    explicit CoinSource(FlipFn fn, std::optional<double> true_p = std::nullopt)
        : fn_(std::move(fn)), true_p_(true_p)
    {
    }

    /// Synthetic Bernoulli(p) coin driven by the caller's stream.
    static CoinSource bernoulli(double p)
    {
        return CoinSource([p](RandomStream& rng) { return rng.bernoulli(p); }, p);
    }

    bool flip(RandomStream& rng)
    {
        ++flips_;
        return fn_(rng);
    }
    bool operator()(RandomStream& rng) { return flip(rng); }

    std::uint64_t flips_used() const noexcept { return flips_; }
    std::optional<double> true_p() const noexcept { return true_p_; }
    void reset_counter() noexcept { flips_ = 0; }

private:
    FlipFn fn_;
    std::uint64_t flips_ = 0;
    std::optional<double> true_p_;
};

struct FactoryConfig {
    double beta = 0.5;          ///< lower bound on the coin's success probability
    double eps = 0.25;          ///< minorization constant, strictly below beta
    double gamma_split = 0.5;   ///< step parameter of the scaled-coin walk
    std::uint64_t flip_budget = 10'000'000; ///< raw flips allowed per scaled-coin call

    static FactoryConfig from_beta(double beta) { return FactoryConfig{beta, beta / 2.0}; }

    void validate() const
    {
        if (!(beta > 0.0 && beta <= 1.0))
            throw ConfigError("beta must lie in (0, 1]");
        if (!(eps > 0.0 && eps < beta))
            throw ConfigError("eps must lie in (0, beta)");
        if (!(gamma_split > 0.0 && gamma_split < 1.0))
            throw ConfigError("gamma_split must lie in (0, 1)");
        if (flip_budget == 0)
            throw ConfigError("flip_budget must be positive");
    }
};

/// Running totals maintained by the factory routines when a pointer is supplied.
struct FactoryStats {
    std::uint64_t raw_flips = 0;     ///< flips of the underlying p-coin
    std::uint64_t subcoin_flips = 0; ///< completed (1-p)/(1-eps) coins
    std::uint64_t scaled_calls = 0;  ///< completed scaled-coin calls

    FactoryStats& operator+=(const FactoryStats& o)
    {
        raw_flips += o.raw_flips;
        subcoin_flips += o.subcoin_flips;
        scaled_calls += o.scaled_calls;
        return *this;
    }
};

/**
 * Flip a (C q)-coin given flips of a q-coin with q <= bound_b and C bound_b < 1.
 *
 * This is Huber's linear Bernoulli factory. A walk on the exponent i targets
 * a (c q)^i coin: a head lowers i by one, a tail raises it by G - 1 with
 * G ~ Geometric((c - 1) / c). Once i reaches the threshold k the remaining
 * target is split as (1 + g e)^(-i) times a (c (1 + g e) q)^i coin, which
 * keeps c q bounded away from one while the walk continues.
 */
template <class Coin>
bool flip_scaled_coin(Coin&& coin, double C, double bound_b, RandomStream& rng, FactoryStats* stats = nullptr,
                      double gamma = 0.5, std::uint64_t flip_budget = 10'000'000)
{
    if (!(C > 1.0))
        throw ConfigError("flip_scaled_coin: C must exceed 1");
    if (!(bound_b >= 0.0) || !(C * bound_b < 1.0))
        throw ConfigError("flip_scaled_coin: need 0 <= b and C*b < 1");

    double eps = std::min(0.644, 1.0 - C * bound_b);
    double c = C;
    auto threshold = [&] { return static_cast<std::int64_t>(std::ceil(2.3 / (gamma * eps))); };
    std::int64_t k = threshold();
    std::int64_t i = 1;
    std::uint64_t used = 0;

    auto finish = [&](bool bit) {
        if (stats) {
            stats->raw_flips += used;
            ++stats->scaled_calls;
        }
        return bit;
    };

    for (;;) {
        if (used >= flip_budget) {
            if (stats)
                stats->raw_flips += used;
            throw BudgetExceeded("scaled-coin factory exceeded its flip budget", used);
        }
        ++used;
        if (coin(rng)) {
            --i;
        } else {
            const auto g = rng.geometric((c - 1.0) / c);
            i += static_cast<std::int64_t>(std::min<std::uint64_t>(g - 1, std::uint64_t{1} << 40));
        }
        if (i == 0)
            return finish(true);
        if (i >= k) {
            const double step = gamma * eps;
            const double keep = std::exp(-static_cast<double>(i) * std::log1p(step));
            if (!rng.bernoulli(keep))
                return finish(false);
            c *= 1.0 + step;
            eps *= 1.0 - gamma;
            k = threshold();
        }
    }
}

/// Flip a (1-p)/(1-eps)-coin from a p-coin with p >= cfg.beta.
template <class Coin>
bool flip_one_minus_p_coin(Coin&& coin, const FactoryConfig& cfg, RandomStream& rng, FactoryStats* stats = nullptr)
{
    cfg.validate();
    auto inverted = [&coin](RandomStream& r) { return !coin(r); };
    const bool bit = flip_scaled_coin(inverted, 1.0 / (1.0 - cfg.eps), 1.0 - cfg.beta, rng, stats, cfg.gamma_split,
                                      cfg.flip_budget);
    if (stats)
        ++stats->subcoin_flips;
    return bit;
}

/**
 * Race an eps-coin against a (p-eps)/(1-eps)-coin, the complement of
 * `one_minus_p_coin`. The first to land heads decides the output, which is
 * then a Bernoulli(eps/p) bit.
 */
template <class SubCoin>
bool race_eps_over_p(SubCoin&& one_minus_p_coin, double eps, RandomStream& rng)
{
    for (;;) {
        if (rng.bernoulli(eps))
            return true;
        if (!one_minus_p_coin(rng))
            return false;
    }
}

/// Flip an eps/p-coin from a p-coin with p >= cfg.beta.
template <class Coin>
bool flip_eps_over_p_coin(Coin&& coin, const FactoryConfig& cfg, RandomStream& rng, FactoryStats* stats = nullptr)
{
    cfg.validate();
    return race_eps_over_p([&](RandomStream& r) { return flip_one_minus_p_coin(coin, cfg, r, stats); }, cfg.eps, rng);
}

/// Sampler for mu, a signed bounded integrand phi and the constants needed
/// to estimate mu(phi) with a nonnegative unbiased estimator.
template <class X>
struct SignProblemSpec {
    std::function<X(RandomStream&)> mu_sampler;
    std::function<double(const X&)> phi;
    double delta = 0.0;   ///< known lower bound on mu(phi), positive
    double phi_sup = 0.0; ///< bound on |phi|

    void validate() const
    {
        if (!mu_sampler || !phi)
            throw ConfigError("sign problem: sampler and integrand are required");
        if (!(delta > 0.0))
            throw ConfigError("sign problem: delta must be positive");
        if (!(delta <= phi_sup))
            throw ConfigError("sign problem: delta cannot exceed the bound on |phi|");
    }
};

/**
 * Unbiased estimate W of mu(phi) with 0 <= W <= phi_sup.
 *
 * W = |phi(xi)| (1 - Y) where xi ~ mu and Y is a 2q-coin, q being the mass
 * that mu_{|phi|} puts on {phi < 0}. Draws from mu_{|phi|} use rejection
 * with acceptance probability |phi(x)| / phi_sup.
 */
template <class X>
double sign_problem_estimate(const SignProblemSpec<X>& spec, RandomStream& rng, FactoryStats* stats = nullptr,
                             std::uint64_t rejection_budget = 1'000'000, std::uint64_t flip_budget = 10'000'000)
{
    spec.validate();
    auto checked_phi = [&spec](const X& x) {
        const double v = spec.phi(x);
        if (!(std::abs(v) <= spec.phi_sup))
            throw ContractViolation("sign problem: |phi(x)| = " + std::to_string(std::abs(v)) +
                                    " exceeds the stated bound " + std::to_string(spec.phi_sup));
        return v;
    };

    const double magnitude = std::abs(checked_phi(spec.mu_sampler(rng)));

    auto negative_sign_coin = [&](RandomStream& r) {
        for (std::uint64_t tries = 0; tries < rejection_budget; ++tries) {
            const double v = checked_phi(spec.mu_sampler(r));
            if (r.uniform() * spec.phi_sup < std::abs(v))
                return v < 0.0;
        }
        throw DrawBudgetExceeded("sign problem: sampling from mu_|phi| failed", rejection_budget);
    };

    const double b = 0.5 - spec.delta / (2.0 * spec.phi_sup);
    const bool y = flip_scaled_coin(negative_sign_coin, 2.0, b, rng, stats, 0.5, flip_budget);
    const double w = y ? 0.0 : magnitude;
    if (!(w >= 0.0 && w <= spec.phi_sup))
        throw ContractViolation("sign problem: estimate left [0, phi_sup]");
    return w;
}

/**
 * Unbiased estimate W of mu(phi) with b <= W <= b + max(b - a, c - b), given
 * a <= phi <= c and mu(phi) >= spec.delta > b. `spec.phi_sup` is ignored.
 */
template <class X>
double constrained_unbiased_estimate(const SignProblemSpec<X>& spec, double a, double b, double c, RandomStream& rng,
                                     FactoryStats* stats = nullptr)
{
    if (!(spec.delta > b))
        throw ConfigError("constrained estimate: delta must exceed b");
    if (!(a <= c))
        throw ConfigError("constrained estimate: need a <= c");
    SignProblemSpec<X> shifted;
    shifted.mu_sampler = spec.mu_sampler;
    shifted.phi = [phi = spec.phi, a, b, c](const X& x) {
        const double v = phi(x);
        if (v < a || v > c)
            throw ContractViolation("constrained estimate: phi(x) outside [a, c]");
        return v - b;
    };
    shifted.delta = spec.delta - b;
    shifted.phi_sup = std::max(b - a, c - b);
    return b + sign_problem_estimate(shifted, rng, stats);
}

} // namespace atomsim
