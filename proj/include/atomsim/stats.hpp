#pragma once

// Small statistical helpers shared by the experiment runners and the tests.

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace atomsim::stats {

/// Welford running mean and variance.
class RunningStats {
public:
    void add(double x)
    {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    std::uint64_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double se() const { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

inline double binomial_se(double p, std::uint64_t n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

/// |observed - expected| measured in standard errors; zero se with exact match gives 0.
inline double z_score(double observed, double expected, double se)
{
    if (se <= 0.0)
        return observed == expected ? 0.0 : INFINITY;
    return std::abs(observed - expected) / se;
}

inline double tv_distance(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() != b.size())
        throw std::invalid_argument("tv_distance: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += std::abs(a[i] - b[i]);
    return 0.5 * s;
}

/// Rough standard deviation of the empirical TV distance from n draws of a law p.
inline double tv_noise_sd(const std::vector<double>& p, std::uint64_t n)
{
    double s = 0.0;
    for (double v : p)
        s += std::sqrt(v * (1.0 - v) / static_cast<double>(n));
    return 0.5 * s;
}

inline std::vector<double> frequencies(const std::vector<std::uint64_t>& counts)
{
    const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}));
    std::vector<double> f;
    for (auto c : counts)
        f.push_back(static_cast<double>(c) / total);
    return f;
}

/// Pearson goodness-of-fit p-value; cells with expected count below `min_expected` are pooled into the last cell.
inline double chi_square_pvalue(const std::vector<std::uint64_t>& counts, const std::vector<double>& probs,
                                double min_expected = 5.0)
{
    const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}));
    std::vector<double> obs;
    std::vector<double> exp;
    double pooled_o = 0.0;
    double pooled_e = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double e = probs[i] * n;
        if (e < min_expected) {
            pooled_o += static_cast<double>(counts[i]);
            pooled_e += e;
        } else {
            obs.push_back(static_cast<double>(counts[i]));
            exp.push_back(e);
        }
    }
    if (pooled_e > 0.0) {
        obs.push_back(pooled_o);
        exp.push_back(pooled_e);
    }
    double stat = 0.0;
    for (std::size_t i = 0; i < obs.size(); ++i)
        stat += (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
    const double dof = static_cast<double>(obs.size()) - 1.0;
    if (dof < 1.0)
        return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), stat));
}

/// Two-sample chi-square homogeneity test on binned counts.
inline double two_sample_chi_square_pvalue(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b)
{
    const double na = static_cast<double>(std::accumulate(a.begin(), a.end(), std::uint64_t{0}));
    const double nb = static_cast<double>(std::accumulate(b.begin(), b.end(), std::uint64_t{0}));
    double stat = 0.0;
    int cells = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double tot = static_cast<double>(a[i] + b[i]);
        if (tot == 0.0)
            continue;
        const double ea = tot * na / (na + nb);
        const double eb = tot * nb / (na + nb);
        stat += (a[i] - ea) * (a[i] - ea) / ea + (b[i] - eb) * (b[i] - eb) / eb;
        ++cells;
    }
    if (cells < 2)
        return 1.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared(cells - 1), stat));
}

} // namespace atomsim::stats
