#pragma once

#include "atomsim/errors.hpp"
#include "atomsim/factory.hpp"
#include "atomsim/random.hpp"
#include "atomsim/regen.hpp"
#include "atomsim/smc.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace atomsim {

/// A point of Z extended with one extra atom value.
template <class Z>
struct Extended {
    std::optional<Z> value; ///< empty means the atom

    static Extended atom() { return Extended{}; }
    static Extended of(Z z) { return Extended{std::move(z)}; }

    bool is_atom() const noexcept { return !value.has_value(); }
    const Z& get() const { return *value; }

    friend bool operator==(const Extended&, const Extended&) = default;
};

/**
 * Feynman-Kac model on Z plus an atom: the initial law puts mass b on the
 * atom, the atom is absorbing under every transition, and the potential of
 * the atom at step t is psi[t].
 */
template <FeynmanKacModel M>
class ExtendedModel {
public:
    using Inner = typename M::Point;
    using Point = Extended<Inner>;

    ExtendedModel(M base, double b, std::vector<double> psi) : base_(std::move(base)), b_(b), psi_(std::move(psi))
    {
        if (!(b_ > 0.0 && b_ < 1.0))
            throw ConfigError("extend_model: b must lie in (0, 1)");
        if (psi_.size() != base_.horizon())
            throw ConfigError("extend_model: need one psi per time step");
        log_psi_.reserve(psi_.size());
        for (double v : psi_) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw ConfigError("extend_model: psi values must be positive and finite");
            log_psi_.push_back(std::log(v));
        }
    }

    std::size_t horizon() const { return base_.horizon(); }

    Point sample_initial(RandomStream& rng) const
    {
        if (rng.bernoulli(b_))
            return Point::atom();
        return Point::of(base_.sample_initial(rng));
    }

    Point sample_transition(std::size_t t, const Point& z, RandomStream& rng) const
    {
        if (z.is_atom())
            return z;
        return Point::of(base_.sample_transition(t, z.get(), rng));
    }

    double log_potential(std::size_t t, const Point& z) const
    {
        return z.is_atom() ? log_psi_[t] : base_.log_potential(t, z.get());
    }

    const M& base() const noexcept { return base_; }
    double b() const noexcept { return b_; }
    const std::vector<double>& psi() const noexcept { return psi_; }

    Path<Point> atom_path() const { return Path<Point>(horizon(), Point::atom()); }

private:
    M base_;
    double b_;
    std::vector<double> psi_;
    std::vector<double> log_psi_;
};

template <FeynmanKacModel M>
ExtendedModel<M> extend_model(M base, double b, std::vector<double> psi)
{
    return ExtendedModel<M>(std::move(base), b, std::move(psi));
}

/// Weight k of the base path measure in the extended target, from log gamma_n(1).
inline double mixture_weight_k_log(double b, const std::vector<double>& psi, double log_gamma_n1)
{
    if (!(b > 0.0 && b < 1.0))
        throw ConfigError("mixture_weight_k: b must lie in (0, 1)");
    double log_prod = 0.0;
    for (double v : psi) {
        if (!(v > 0.0))
            throw ConfigError("mixture_weight_k: psi values must be positive");
        log_prod += std::log(v);
    }
    // k = 1 / (1 + exp(s)) with s = log(b / (1 - b)) + log prod psi - log gamma_n(1)
    const double s = std::log(b) - std::log1p(-b) + log_prod - log_gamma_n1;
    return s > 0.0 ? std::exp(-s) / (1.0 + std::exp(-s)) : 1.0 / (1.0 + std::exp(s));
}

inline double mixture_weight_k(double b, const std::vector<double>& psi, double gamma_n1)
{
    if (!(gamma_n1 > 0.0))
        throw ConfigError("mixture_weight_k: gamma_n(1) must be positive");
    return mixture_weight_k_log(b, psi, std::log(gamma_n1));
}

struct TuningReport {
    std::vector<double> psi;
    std::vector<double> atom_mass_estimates;
    double atom_mass_mean = 0.0;
    double atom_mass_lower = 0.0;   ///< one-sided Hoeffding bound at `confidence`
    double beta_recommendation = 0.0;
    double b = 0.5;
    double safety = 0.5;
    double confidence = 0.99;
    std::size_t n_prime = 0;
    std::size_t reps = 0;
};

struct TuningOptions {
    double b = 0.5;
    double safety = 0.5;
    double confidence = 0.99;
};

/// Terminal-weighted fraction of atom particles in a run on the extended model.
template <class Z>
double atom_mass_estimate(const ParticleSystem<Extended<Z>>& v)
{
    const auto& last = v.particles.back();
    const auto& lg = v.log_potentials.back();
    double top = -std::numeric_limits<double>::infinity();
    for (double x : lg)
        top = std::max(top, x);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < last.size(); ++i) {
        const double w = std::exp(lg[i] - top);
        den += w;
        if (last[i].is_atom())
            num += w;
    }
    return num / den;
}

/**
 * Set psi_t to the mean potential at step t of one SMC run with n_prime
 * particles, then estimate the extended target's atom mass with `reps`
 * further runs and derive a conservative beta from a Hoeffding lower bound.
 */
template <FeynmanKacModel M>
TuningReport tune_psi(const M& base, std::size_t n_prime, std::size_t reps, RandomStream& rng,
                      const TuningOptions& opt = {})
{
    if (n_prime < 2)
        throw ConfigError("tune_psi: need at least two particles");
    if (reps < 1)
        throw ConfigError("tune_psi: need at least one repetition");
    TuningReport report;
    report.n_prime = n_prime;
    report.reps = reps;
    report.b = opt.b;
    report.safety = opt.safety;
    report.confidence = opt.confidence;

    const auto v = run_smc(base, n_prime, rng);
    for (std::size_t t = 0; t < v.horizon(); ++t)
        report.psi.push_back(std::exp(detail::log_mean_exp(v.log_potentials[t])));

    const auto ext = extend_model(base, opt.b, report.psi);
    double sum = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
        const double m = atom_mass_estimate(run_smc(ext, n_prime, rng));
        report.atom_mass_estimates.push_back(m);
        sum += m;
    }
    report.atom_mass_mean = sum / static_cast<double>(reps);
    const double slack = std::sqrt(std::log(1.0 / (1.0 - opt.confidence)) / (2.0 * static_cast<double>(reps)));
    report.atom_mass_lower = std::max(0.0, report.atom_mass_mean - slack);
    report.beta_recommendation = opt.safety * report.atom_mass_lower;
    return report;
}

/// Minorization constant of the i-cSMC kernel in terms of the forgetting constant F.
inline double epsilon_N_bound(std::size_t N, double F, std::size_t n)
{
    if (N < 2 || !(F >= 1.0) || n < 1)
        throw ConfigError("epsilon_N_bound: need N >= 2, F >= 1, n >= 1");
    const double ratio = (static_cast<double>(N) - 1.0) / (static_cast<double>(N) + 2.0 * (F - 1.0));
    return std::exp(static_cast<double>(n) * std::log(ratio));
}

/// Upper bound (1 + 2(F-1)/N)^n on the density of pi with respect to the SMC path law.
inline double rn_derivative_bound(std::size_t N, double F, std::size_t n)
{
    return std::exp(static_cast<double>(n) * std::log1p(2.0 * (F - 1.0) / static_cast<double>(N)));
}

/// Smallest N >= 2 with epsilon_N_bound(N, F, n) >= target, found by bisection.
inline std::size_t particles_for_epsilon(double F, std::size_t n, double target)
{
    if (!(target > 0.0 && target < 1.0))
        throw ConfigError("particles_for_epsilon: target must lie in (0, 1)");
    std::size_t lo = 2;
    if (epsilon_N_bound(lo, F, n) >= target)
        return lo;
    std::size_t hi = 4;
    while (epsilon_N_bound(hi, F, n) < target)
        hi *= 2;
    while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        (epsilon_N_bound(mid, F, n) >= target ? hi : lo) = mid;
    }
    return hi;
}

/**
 * Linear-in-n particle rule N = ceil(-2 (F - 1) n / log(target)). It targets
 * the asymptotic guarantee exp(-2 (F - 1) n / N) >= target, which is weaker
 * than epsilon_N_bound: at this N the closed-form bound can fall short.
 */
inline std::size_t particles_linear_rule(double F, std::size_t n, double target)
{
    if (!(target > 0.0 && target < 1.0))
        throw ConfigError("particles_linear_rule: target must lie in (0, 1)");
    return static_cast<std::size_t>(std::ceil(-2.0 * (F - 1.0) * static_cast<double>(n) / std::log(target)));
}

/// One-step bound A on F: sup of G over its one-step prediction times sup of the kernel density ratio.
inline double bound_F_one_step(double sup_ratio_G_over_MG, double sup_kernel_ratio)
{
    if (!(sup_ratio_G_over_MG > 0.0) || !(sup_kernel_ratio > 0.0))
        throw ConfigError("bound_F_one_step: suprema must be positive");
    return sup_ratio_G_over_MG * sup_kernel_ratio;
}

/// m-step bound on F from the potential-product factor and the m-step kernel density factor.
inline double bound_F_m_step(double potential_product_factor, double kernel_density_factor)
{
    return bound_F_one_step(potential_product_factor, kernel_density_factor);
}

/// F-check <= F E^n, evaluated in log space.
inline double bound_F_check(double F, double E, std::size_t n)
{
    if (!(E >= 1.0) || !(F > 0.0))
        throw ConfigError("bound_F_check: need F > 0 and E >= 1");
    return std::exp(std::log(F) + static_cast<double>(n) * std::log(E));
}

/// i-cSMC on an extended model viewed as an atomic kernel over paths.
template <FeynmanKacModel M>
class PathKernel {
public:
    using State = Path<Extended<typename M::Point>>;

    PathKernel(const ExtendedModel<M>& model, std::size_t N) : model_(model), N_(N)
    {
        if (N < 1)
            throw ConfigError("PathKernel: need at least one particle");
    }

    State sample(const State& x, RandomStream& rng) const { return icsmc_step(model_, N_, x, rng); }
    State atom() const { return model_.atom_path(); }
    bool is_atom(const State& x) const { return !x.empty() && x.back().is_atom(); }

    const ExtendedModel<M>& model() const noexcept { return model_; }
    std::size_t particles() const noexcept { return N_; }

private:
    const ExtendedModel<M>& model_;
    std::size_t N_;
};

template <class Z>
struct PerfectPathReport {
    Path<Z> path;
    CostRecord cost;
    std::uint64_t attempts = 0; ///< extended-target draws made; all but the last were the atom
};

/**
 * Exact draw from the base path measure: draw exactly from the extended
 * target with a perfect sampler on the i-cSMC kernel and repeat until the
 * draw is not the atom path.
 */
template <FeynmanKacModel M>
PerfectPathReport<typename M::Point> perfect_sample_path(const ExtendedModel<M>& ext, std::size_t N,
                                                         const FactoryConfig& cfg, SamplerAlgorithm algo,
                                                         RandomStream& rng, std::uint64_t max_attempts = 1'000'000)
{
    const PathKernel<M> kernel(ext, N);
    PerfectPathReport<typename M::Point> out;
    while (out.attempts < max_attempts) {
        ++out.attempts;
        auto rep = [&] {
            try {
                return perfect_sample(kernel, algo, cfg, rng);
            } catch (const BudgetExceeded& e) {
                throw e.with_context("; the i-cSMC atom-hitting probability is probably below beta = " +
                                     std::to_string(cfg.beta) + ", so lower beta or raise N");
            }
        }();
        out.cost += rep.cost;
        if (!kernel.is_atom(rep.sample)) {
            out.path.reserve(rep.sample.size());
            for (auto& z : rep.sample)
                out.path.push_back(std::move(*z.value));
            return out;
        }
    }
    throw DrawBudgetExceeded("perfect_sample_path: every draw was the atom path", out.attempts);
}

template <FeynmanKacModel M>
PerfectPathReport<typename M::Point> perfect_sample_path(const M& base, std::size_t N, double b,
                                                         const std::vector<double>& psi, const FactoryConfig& cfg,
                                                         SamplerAlgorithm algo, RandomStream& rng)
{
    const auto ext = extend_model(base, b, psi);
    return perfect_sample_path(ext, N, cfg, algo, rng);
}

} // namespace atomsim
