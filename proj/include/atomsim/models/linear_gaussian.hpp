#pragma once

#include "atomsim/errors.hpp"
#include "atomsim/models/normal.hpp"
#include "atomsim/random.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace atomsim {

struct LinearGaussianParams {
    double a_coef = 0.9;  ///< state transition coefficient
    double q_var = 1.0;   ///< state noise variance
    double c_coef = 1.0;  ///< observation coefficient
    double r_var = 1.0;   ///< observation noise variance
    double mu_mean = 0.0; ///< initial state mean
    double mu_var = 1.0;  ///< initial state variance

    void validate() const
    {
        if (!(q_var > 0.0) || !(r_var > 0.0) || !(mu_var > 0.0))
            throw ConfigError("linear Gaussian model: variances must be positive");
    }
};

/// z_1 ~ N(mu_mean, mu_var), z_t = a z_{t-1} + N(0, q), y_t = c z_t + N(0, r).
class LinearGaussianModel {
public:
    using Point = double;

    LinearGaussianModel(LinearGaussianParams params, std::vector<double> observations)
        : p_(params), y_(std::move(observations))
    {
        p_.validate();
        if (y_.empty())
            throw ConfigError("linear Gaussian model: no observations");
        sd_q_ = std::sqrt(p_.q_var);
        sd_mu_ = std::sqrt(p_.mu_var);
        log_g_max_ = -0.5 * std::log(p_.r_var) - normal::kLogSqrt2Pi;
    }

    std::size_t horizon() const { return y_.size(); }
    double sample_initial(RandomStream& rng) const { return rng.normal(p_.mu_mean, sd_mu_); }
    double sample_transition(std::size_t, double z, RandomStream& rng) const
    {
        return rng.normal(p_.a_coef * z, sd_q_);
    }
    double log_potential(std::size_t t, double z) const { return normal::log_pdf(y_[t], p_.c_coef * z, p_.r_var); }
    double log_potential_upper(std::size_t) const { return log_g_max_; }

    const LinearGaussianParams& params() const { return p_; }
    const std::vector<double>& observations() const { return y_; }

    /// Draw an observation sequence of length n from the model.
    static std::vector<double> simulate(const LinearGaussianParams& p, std::size_t n, RandomStream& rng)
    {
        p.validate();
        std::vector<double> y;
        y.reserve(n);
        double z = rng.normal(p.mu_mean, std::sqrt(p.mu_var));
        for (std::size_t t = 0; t < n; ++t) {
            if (t > 0)
                z = rng.normal(p.a_coef * z, std::sqrt(p.q_var));
            y.push_back(rng.normal(p.c_coef * z, std::sqrt(p.r_var)));
        }
        return y;
    }

private:
    LinearGaussianParams p_;
    std::vector<double> y_;
    double sd_q_ = 1.0;
    double sd_mu_ = 1.0;
    double log_g_max_ = 0.0;
};

struct KalmanStep {
    double pred_mean = 0.0;
    double pred_var = 0.0;
    double filt_mean = 0.0;
    double filt_var = 0.0;
    double log_increment = 0.0; ///< log gamma_t(1) - log gamma_{t-1}(1)
};

inline std::vector<KalmanStep> kalman_filter(const LinearGaussianModel& model)
{
    const auto& p = model.params();
    std::vector<KalmanStep> out;
    out.reserve(model.horizon());
    double m = p.mu_mean;
    double v = p.mu_var;
    for (std::size_t t = 0; t < model.horizon(); ++t) {
        KalmanStep s;
        if (t > 0) {
            m = p.a_coef * m;
            v = p.a_coef * p.a_coef * v + p.q_var;
        }
        s.pred_mean = m;
        s.pred_var = v;
        const double y = model.observations()[t];
        const double innov_var = p.c_coef * p.c_coef * v + p.r_var;
        const double innov = y - p.c_coef * m;
        s.log_increment = normal::log_pdf(innov, 0.0, innov_var);
        const double gain = v * p.c_coef / innov_var;
        m = m + gain * innov;
        v = (1.0 - gain * p.c_coef) * v;
        s.filt_mean = m;
        s.filt_var = v;
        out.push_back(s);
    }
    return out;
}

inline double kalman_log_evidence(const LinearGaussianModel& model)
{
    double s = 0.0;
    for (const auto& step : kalman_filter(model))
        s += step.log_increment;
    return s;
}

struct SmoothedMarginal {
    double mean = 0.0;
    double var = 0.0;
};

/// Rauch-Tung-Striebel smoother: marginals of the path posterior.
inline std::vector<SmoothedMarginal> kalman_smoother(const LinearGaussianModel& model,
                                                     const std::vector<KalmanStep>& filtered)
{
    const auto& p = model.params();
    const std::size_t n = filtered.size();
    std::vector<SmoothedMarginal> out(n);
    out[n - 1] = {filtered[n - 1].filt_mean, filtered[n - 1].filt_var};
    for (std::size_t t = n - 1; t-- > 0;) {
        const auto& f = filtered[t];
        const auto& next_pred = filtered[t + 1];
        const double J = f.filt_var * p.a_coef / next_pred.pred_var;
        out[t].mean = f.filt_mean + J * (out[t + 1].mean - next_pred.pred_mean);
        out[t].var = f.filt_var + J * J * (out[t + 1].var - next_pred.pred_var);
    }
    return out;
}

inline std::vector<SmoothedMarginal> kalman_smoother(const LinearGaussianModel& model)
{
    return kalman_smoother(model, kalman_filter(model));
}

} // namespace atomsim
