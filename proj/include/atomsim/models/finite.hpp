#pragma once

#include "atomsim/errors.hpp"
#include "atomsim/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace atomsim {

using Matrix = std::vector<std::vector<double>>;

namespace detail {

inline void check_stochastic(const Matrix& P)
{
    const std::size_t n = P.size();
    if (n == 0)
        throw ConfigError("transition matrix is empty");
    for (std::size_t i = 0; i < n; ++i) {
        if (P[i].size() != n)
            throw ConfigError("transition matrix is not square");
        double s = 0.0;
        for (double v : P[i]) {
            if (!(v >= 0.0))
                throw ConfigError("transition matrix has a negative entry in row " + std::to_string(i));
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw ConfigError("row " + std::to_string(i) + " of the transition matrix does not sum to 1");
    }
}

inline std::vector<double> cumulative(const std::vector<double>& w)
{
    std::vector<double> c(w.size());
    std::partial_sum(w.begin(), w.end(), c.begin());
    return c;
}

inline std::size_t draw_from_cumulative(const std::vector<double>& c, RandomStream& rng)
{
    const double u = rng.uniform() * c.back();
    auto it = std::upper_bound(c.begin(), c.end(), u);
    if (it == c.end())
        --it;
    return static_cast<std::size_t>(it - c.begin());
}

} // namespace detail

/// Markov chain on {0, ..., S-1} with a designated atom state.
class FiniteChain {
public:
    using State = std::size_t;

    FiniteChain(Matrix P, State atom) : P_(std::move(P)), atom_(atom)
    {
        detail::check_stochastic(P_);
        if (atom_ >= P_.size())
            throw ConfigError("atom index out of range");
        for (const auto& row : P_)
            cum_.push_back(detail::cumulative(row));
    }

    State sample(State x, RandomStream& rng) const { return detail::draw_from_cumulative(cum_[x], rng); }
    State atom() const { return atom_; }
    bool is_atom(State x) const { return x == atom_; }
    std::string describe(State x) const { return std::to_string(x); }

    std::size_t size() const { return P_.size(); }
    const Matrix& matrix() const { return P_; }
    double atom_prob(State x) const { return P_[x][atom_]; }
    double min_atom_prob() const
    {
        double m = 1.0;
        for (std::size_t x = 0; x < P_.size(); ++x)
            m = std::min(m, atom_prob(x));
        return m;
    }

private:
    Matrix P_;
    std::vector<std::vector<double>> cum_;
    State atom_;
};

/// Chain whose rows all equal `law`; the invariant law is `law` itself.
inline FiniteChain iid_chain(const std::vector<double>& law, std::size_t atom)
{
    return FiniteChain(Matrix(law.size(), law), atom);
}

/// Stationary distribution by power iteration until the L1 change drops below `tol`.
inline std::vector<double> finite_chain_oracle(const Matrix& P, double tol = 1e-12, std::size_t max_iter = 10'000'000)
{
    detail::check_stochastic(P);
    const std::size_t n = P.size();
    std::vector<double> pi(n, 1.0 / static_cast<double>(n));
    std::vector<double> next(n);
    for (std::size_t it = 0; it < max_iter; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                next[j] += pi[i] * P[i][j];
        // Averaging with the previous iterate removes oscillation on periodic chains.
        double diff = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = 0.5 * (pi[j] + next[j]);
            diff += std::abs(v - pi[j]);
            pi[j] = v;
        }
        if (diff < tol)
            break;
    }
    const double s = std::accumulate(pi.begin(), pi.end(), 0.0);
    for (auto& v : pi)
        v /= s;
    return pi;
}

/**
 * Feynman-Kac model on a finite state space {0, ..., S-1} with a
 * time-homogeneous transition matrix and per-step potential tables.
 */
class FiniteFKModel {
public:
    using Point = std::size_t;

    FiniteFKModel(std::vector<double> mu, Matrix M, Matrix G) : mu_(std::move(mu)), M_(std::move(M)), G_(std::move(G))
    {
        detail::check_stochastic(M_);
        if (mu_.size() != M_.size())
            throw ConfigError("initial law and transition matrix sizes differ");
        if (G_.empty())
            throw ConfigError("need at least one potential table");
        for (const auto& g : G_) {
            if (g.size() != mu_.size())
                throw ConfigError("potential table has the wrong size");
            for (double v : g)
                if (!(v >= 0.0))
                    throw ConfigError("potentials must be nonnegative");
        }
        mu_cum_ = detail::cumulative(mu_);
        for (const auto& row : M_)
            M_cum_.push_back(detail::cumulative(row));
    }

    std::size_t horizon() const { return G_.size(); }
    std::size_t states() const { return mu_.size(); }
    Point sample_initial(RandomStream& rng) const { return detail::draw_from_cumulative(mu_cum_, rng); }
    Point sample_transition(std::size_t, Point z, RandomStream& rng) const
    {
        return detail::draw_from_cumulative(M_cum_[z], rng);
    }
    double log_potential(std::size_t t, Point z) const { return std::log(G_[t][z]); }

    const std::vector<double>& mu() const { return mu_; }
    const Matrix& transition() const { return M_; }
    const Matrix& potentials() const { return G_; }

private:
    std::vector<double> mu_;
    Matrix M_;
    Matrix G_;
    std::vector<double> mu_cum_;
    std::vector<std::vector<double>> M_cum_;
};

/// Unnormalized path weights of a finite Feynman-Kac model, enumerated exhaustively.
struct PathEnumeration {
    std::size_t states = 0;
    std::size_t horizon = 0;
    std::vector<double> weight; ///< gamma_n({path}); paths indexed in base `states`, time 0 most significant
    double gamma_n1 = 0.0;

    std::size_t index_of(const std::vector<std::size_t>& path) const
    {
        std::size_t k = 0;
        for (auto z : path)
            k = k * states + z;
        return k;
    }

    std::vector<std::size_t> path_of(std::size_t k) const
    {
        std::vector<std::size_t> p(horizon);
        for (std::size_t t = horizon; t-- > 0;) {
            p[t] = k % states;
            k /= states;
        }
        return p;
    }

    std::vector<double> normalized() const
    {
        std::vector<double> pi(weight);
        for (auto& v : pi)
            v /= gamma_n1;
        return pi;
    }
};

inline PathEnumeration enumerate_paths(const FiniteFKModel& m)
{
    PathEnumeration e;
    e.states = m.states();
    e.horizon = m.horizon();
    std::size_t total = 1;
    for (std::size_t t = 0; t < e.horizon; ++t)
        total *= e.states;
    e.weight.assign(total, 0.0);
    for (std::size_t k = 0; k < total; ++k) {
        const auto p = e.path_of(k);
        double w = m.mu()[p[0]] * m.potentials()[0][p[0]];
        for (std::size_t t = 1; t < e.horizon; ++t)
            w *= m.transition()[p[t - 1]][p[t]] * m.potentials()[t][p[t]];
        e.weight[k] = w;
        e.gamma_n1 += w;
    }
    return e;
}

/// gamma_t(1) for t = 1..n by forward recursion; element t-1 holds gamma_t(1).
inline std::vector<double> finite_gamma_sequence(const FiniteFKModel& m)
{
    const std::size_t S = m.states();
    std::vector<double> alpha(S);
    std::vector<double> out;
    for (std::size_t z = 0; z < S; ++z)
        alpha[z] = m.mu()[z] * m.potentials()[0][z];
    out.push_back(std::accumulate(alpha.begin(), alpha.end(), 0.0));
    for (std::size_t t = 1; t < m.horizon(); ++t) {
        std::vector<double> next(S, 0.0);
        for (std::size_t i = 0; i < S; ++i)
            for (std::size_t j = 0; j < S; ++j)
                next[j] += alpha[i] * m.transition()[i][j];
        for (std::size_t j = 0; j < S; ++j)
            next[j] *= m.potentials()[t][j];
        alpha = std::move(next);
        out.push_back(std::accumulate(alpha.begin(), alpha.end(), 0.0));
    }
    return out;
}

} // namespace atomsim
