#pragma once

#include "atomsim/errors.hpp"
#include "atomsim/models/linear_gaussian.hpp"
#include "atomsim/models/normal.hpp"
#include "atomsim/random.hpp"
#include "atomsim/smc.hpp"

#include <array>
#include <cmath>
#include <concepts>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace atomsim {

/// (transition coefficient, state noise variance, observation coefficient, observation noise variance)
using Theta = std::array<double, 4>;

/// Linear Gaussian model for parameter theta; the initial state law is kept fixed.
inline LinearGaussianModel lg_model_for(const Theta& theta, const std::vector<double>& y,
                                        double mu_mean = 0.0, double mu_var = 1.0)
{
    return LinearGaussianModel(LinearGaussianParams{theta[0], theta[1], theta[2], theta[3], mu_mean, mu_var}, y);
}

inline bool theta_admissible(const Theta& theta) { return theta[1] > 0.0 && theta[3] > 0.0; }

/// Source of log-likelihood estimates for a parameter value.
template <class L>
concept LikelihoodEstimator = requires(const L& l, const Theta& theta, RandomStream& rng) {
    { l.log_estimate(theta, rng) } -> std::convertible_to<double>;
};

/// Particle-filter estimate of the marginal likelihood (unbiased on the natural scale).
struct SmcLikelihood {
    std::vector<double> observations;
    std::size_t particles = 256;

    double log_estimate(const Theta& theta, RandomStream& rng) const
    {
        if (!theta_admissible(theta))
            return -std::numeric_limits<double>::infinity();
        const auto model = lg_model_for(theta, observations);
        try {
            return estimate_log_nc(run_smc(model, particles, rng));
        } catch (const ParticleDeath&) {
            return -std::numeric_limits<double>::infinity();
        }
    }
};

/// Exact marginal likelihood from the Kalman filter; the stream is not used.
struct KalmanLikelihood {
    std::vector<double> observations;

    double log_estimate(const Theta& theta, RandomStream&) const
    {
        if (!theta_admissible(theta))
            return -std::numeric_limits<double>::infinity();
        return kalman_log_evidence(lg_model_for(theta, observations));
    }
};

struct PmmhSettings {
    double proposal_sd = 0.1;
    double prior_sd = 0.2;
    Theta prior_mean{0.0, 0.0, 0.0, 0.0};
    Theta theta_star{0.9, 1.0, 1.0, 1.0};
    double mix_weight = 0.5; ///< probability of a parameter move rather than a jump to the atom
    double log_atom_w = 0.0; ///< log of the likelihood value attached to the atom
};

/// Point of the extended pseudo-marginal space: (theta, log w) or the atom.
struct PmmhState {
    bool atom = false;
    Theta theta{};
    double log_w = 0.0;

    friend bool operator==(const PmmhState&, const PmmhState&) = default;
};

enum class PmmhMove { to_parameter, to_atom, from_atom };

struct PmmhStepInfo {
    PmmhMove move = PmmhMove::to_parameter;
    bool accepted = false;
};

/**
 * Pseudo-marginal Metropolis-Hastings kernel with an artificial atom.
 *
 * Away from the atom the proposal is a Gaussian random walk on theta with
 * probability `mix_weight` and a jump to the atom otherwise; from the atom
 * it draws theta from N(theta_star, proposal_sd^2 I). Each proposed theta
 * gets a fresh likelihood estimate w'. The atom carries prior mass 1/2 and
 * the fixed likelihood value exp(log_atom_w).
 */
template <LikelihoodEstimator L>
class AtomizedPmmhKernel {
public:
    using State = PmmhState;

    AtomizedPmmhKernel(L likelihood, PmmhSettings settings) : lik_(std::move(likelihood)), s_(settings)
    {
        if (!(s_.mix_weight > 0.0 && s_.mix_weight < 1.0))
            throw ConfigError("PMMH: mix_weight must lie in (0, 1)");
        if (!(s_.proposal_sd > 0.0) || !(s_.prior_sd > 0.0))
            throw ConfigError("PMMH: standard deviations must be positive");
    }

    State atom() const { return State{true, {}, s_.log_atom_w}; }
    bool is_atom(const State& x) const { return x.atom; }

    std::string describe(const State& x) const
    {
        if (x.atom)
            return "atom";
        char buf[160];
        std::snprintf(buf, sizeof buf, "theta=(%.6g, %.6g, %.6g, %.6g) log_w=%.6g", x.theta[0], x.theta[1],
                      x.theta[2], x.theta[3], x.log_w);
        return buf;
    }

    State sample(const State& x, RandomStream& rng) const { return sample(x, rng, nullptr); }

    State sample(const State& x, RandomStream& rng, PmmhStepInfo* info) const
    {
        if (x.atom) {
            const Theta proposal = random_walk(s_.theta_star, rng);
            const double log_w = lik_.log_estimate(proposal, rng);
            const double log_ratio = log_prior(proposal) + log_w + std::log1p(-s_.mix_weight) - s_.log_atom_w -
                                     log_proposal(s_.theta_star, proposal);
            return decide(x, State{false, proposal, log_w}, log_ratio, PmmhMove::from_atom, rng, info);
        }
        if (rng.bernoulli(s_.mix_weight)) {
            const Theta proposal = random_walk(x.theta, rng);
            const double log_w = lik_.log_estimate(proposal, rng);
            const double log_ratio = log_prior(proposal) + log_w - log_prior(x.theta) - x.log_w;
            return decide(x, State{false, proposal, log_w}, log_ratio, PmmhMove::to_parameter, rng, info);
        }
        const double log_ratio = s_.log_atom_w + log_proposal(s_.theta_star, x.theta) - log_prior(x.theta) - x.log_w -
                                 std::log1p(-s_.mix_weight);
        return decide(x, atom(), log_ratio, PmmhMove::to_atom, rng, info);
    }

    double log_prior(const Theta& theta) const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < 4; ++i)
            s += normal::log_pdf(theta[i], s_.prior_mean[i], s_.prior_sd * s_.prior_sd);
        return s;
    }

    double log_proposal(const Theta& from, const Theta& to) const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < 4; ++i)
            s += normal::log_pdf(to[i], from[i], s_.proposal_sd * s_.proposal_sd);
        return s;
    }

    const PmmhSettings& settings() const { return s_; }
    const L& likelihood() const { return lik_; }

private:
    Theta random_walk(const Theta& centre, RandomStream& rng) const
    {
        Theta t;
        for (std::size_t i = 0; i < 4; ++i)
            t[i] = rng.normal(centre[i], s_.proposal_sd);
        return t;
    }

    static State decide(const State& current, State proposal, double log_ratio, PmmhMove move, RandomStream& rng,
                        PmmhStepInfo* info)
    {
        const bool accept = !std::isnan(log_ratio) && (log_ratio >= 0.0 || std::log(rng.uniform_pos()) < log_ratio);
        if (info)
            *info = {move, accept};
        return accept ? proposal : current;
    }

    L lik_;
    PmmhSettings s_;
};

/// Log of an SMC estimate of the marginal likelihood at theta_star, used as the atom's weight.
inline double estimate_atom_log_w(const Theta& theta_star, const std::vector<double>& y, std::size_t particles,
                                  RandomStream& rng)
{
    return estimate_log_nc(run_smc(lg_model_for(theta_star, y), particles, rng));
}

template <LikelihoodEstimator L>
AtomizedPmmhKernel<L> build_atomized_pmmh(L likelihood, PmmhSettings settings)
{
    return AtomizedPmmhKernel<L>(std::move(likelihood), settings);
}

} // namespace atomsim
