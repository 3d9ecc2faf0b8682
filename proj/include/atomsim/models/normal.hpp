#pragma once

#include <cmath>

namespace atomsim::normal {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double log_pdf(double x, double mean, double var)
{
    const double d = x - mean;
    return -0.5 * d * d / var - 0.5 * std::log(var) - kLogSqrt2Pi;
}

inline double pdf(double x, double mean, double var) { return std::exp(log_pdf(x, mean, var)); }

/// Standard normal CDF via the complementary error function, accurate in both tails.
inline double cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

inline double cdf(double x, double mean, double var) { return cdf((x - mean) / std::sqrt(var)); }

/// P(lo <= X < hi) for X ~ N(mean, var), computed on the side that avoids cancellation.
inline double interval_prob(double lo, double hi, double mean, double var)
{
    const double s = std::sqrt(var);
    const double a = (lo - mean) / s;
    const double b = (hi - mean) / s;
    if (a > 0.0)
        return 0.5 * (std::erfc(a * M_SQRT1_2) - std::erfc(b * M_SQRT1_2));
    return cdf(b) - cdf(a);
}

} // namespace atomsim::normal
