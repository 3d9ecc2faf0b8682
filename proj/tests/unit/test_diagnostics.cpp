#include "atomsim/diagnostics.hpp"
#include "atomsim/models/finite.hpp"
#include "atomsim/regen.hpp"

#include "chains.hpp"
#include "stats.hpp"

#include <gtest/gtest.h>

using namespace atomsim;
using testing_support::binomial_se;
using testing_support::RunningStats;
using testing_support::z_score;

namespace {

/// P(Binomial(n, p) >= k) by direct summation in log space.
double binomial_upper_tail(std::uint64_t k, std::uint64_t n, double p)
{
    double s = 0.0;
    for (std::uint64_t j = k; j <= n; ++j) {
        const double lc = std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0);
        s += std::exp(lc + j * std::log(p) + (n - j) * std::log1p(-p));
    }
    return s;
}

} // namespace

TEST(BetaDiagnostic, StopsQuicklyWhenPExceedsBeta)
{
    RandomStream rng(1);
    auto coin = CoinSource::bernoulli(0.5);
    RunningStats tau;
    for (int i = 0; i < 20000; ++i) {
        const auto out = run_beta_diagnostic(coin, 0.2, 1'000'000, rng);
        ASSERT_EQ(out.verdict, DiagnosticVerdict::passed);
        ASSERT_TRUE(out.stopped_at.has_value());
        EXPECT_EQ(*out.stopped_at, out.flips_used);
        tau.add(static_cast<double>(*out.stopped_at));
    }
    EXPECT_LE(tau.mean(), 8.0 / 3.0 + 4.0 * tau.se());
}

TEST(BetaDiagnostic, NeverStopProbability)
{
    const double p = 0.19;
    const double expected = prob_never_stop(p, 5);
    EXPECT_NEAR(expected, 0.0617, 5e-5);
    RandomStream rng(2);
    auto coin = CoinSource::bernoulli(p);
    const int trials = 2000;
    int never = 0;
    for (int i = 0; i < trials; ++i) {
        const auto out = run_beta_diagnostic(coin, 0.2, 20000, rng);
        if (out.verdict == DiagnosticVerdict::budget_exceeded) {
            ++never;
            EXPECT_EQ(out.flips_used, 20000u);
            EXPECT_FALSE(out.stopped_at.has_value());
        }
    }
    EXPECT_LT(z_score(static_cast<double>(never) / trials, expected, binomial_se(expected, trials)), 4.0);
}

TEST(BetaDiagnostic, Validation)
{
    RandomStream rng(3);
    auto coin = CoinSource::bernoulli(0.5);
    EXPECT_THROW(run_beta_diagnostic(coin, 0.0, 10, rng), ConfigError);
    EXPECT_THROW(run_beta_diagnostic(coin, 0.2, 0, rng), ConfigError);
    EXPECT_THROW(prob_never_stop(0.3, 5), ConfigError);
    EXPECT_THROW(prob_never_stop(0.1, 1), ConfigError);
    EXPECT_EQ(default_diagnostic_budget(0.2), 200u);
    EXPECT_DOUBLE_EQ(prob_never_stop(0.0, 4), 1.0);
}

TEST(Sensitivity, BoundFormula)
{
    EXPECT_DOUBLE_EQ(tv_sensitivity_bound(0.3, 0.6), 0.5);
    EXPECT_DOUBLE_EQ(tv_sensitivity_bound(0.3, 0.3), 0.0);
    EXPECT_DOUBLE_EQ(tv_sensitivity_bound(0.3, 0.1), 0.0);
    EXPECT_THROW(tv_sensitivity_bound(0.0, 0.1), ConfigError);
}

TEST(ClopperPearson, MatchesBinomialTail)
{
    for (auto [k, n] : {std::pair<std::uint64_t, std::uint64_t>{3, 10}, {50, 200}, {199, 200}}) {
        const double lower = clopper_pearson_lower(k, n, 0.99);
        EXPECT_NEAR(binomial_upper_tail(k, n, lower), 0.01, 1e-8) << k << "/" << n;
    }
    EXPECT_EQ(clopper_pearson_lower(0, 10, 0.99), 0.0);
    EXPECT_THROW(clopper_pearson_lower(11, 10, 0.99), ConfigError);
}

TEST(PilotStates, CountAndReproducibility)
{
    const auto chain = testing_support::five_state_chain();
    RandomStream a(4), b(4);
    const auto s1 = pilot_states(chain, 50, 3, a);
    EXPECT_EQ(s1.size(), 50u);
    EXPECT_EQ(s1, pilot_states(chain, 50, 3, b));
}

TEST(EstimatePLower, ConservativeAndTight)
{
    const auto chain = testing_support::five_state_chain();
    RandomStream rng(5);
    const std::vector<std::size_t> states{0, 1, 2, 3, 4};
    const double lower = estimate_p_lower(chain, states, 20000, rng);
    EXPECT_LE(lower, chain.min_atom_prob());
    EXPECT_GT(lower, 0.28);
    EXPECT_THROW(estimate_p_lower(chain, std::vector<std::size_t>{}, 10, rng), ConfigError);
}

TEST(DiagnosedKernel, LeavesSamplerOutputUnchanged)
{
    const auto chain = testing_support::five_state_chain();
    const DiagnosedKernel<FiniteChain> watched(chain, 0.2, default_diagnostic_budget(0.2), 99);
    const FactoryConfig cfg{0.3, 0.15};
    RandomStream plain_rng(5), watched_rng(5);
    for (int i = 0; i < 200; ++i) {
        const auto a = perfect_sample(chain, SamplerAlgorithm::imputation, cfg, plain_rng);
        const auto b = perfect_sample(watched, SamplerAlgorithm::imputation, cfg, watched_rng);
        ASSERT_EQ(a.sample, b.sample);
        ASSERT_EQ(a.cost.kernel_draws, b.cost.kernel_draws);
    }
    EXPECT_GT(watched.runs(), 0u);
    EXPECT_GE(watched.flips(), watched.runs());
}

TEST(DiagnosedKernel, ThrowsWhenBetaIsTooLarge)
{
    const auto chain = testing_support::five_state_chain();
    const DiagnosedKernel<FiniteChain> watched(chain, 0.9, 5, 1);
    const FactoryConfig cfg{0.3, 0.15};
    RandomStream rng(2);
    bool thrown = false;
    try {
        for (int i = 0; i < 50; ++i)
            perfect_sample(watched, SamplerAlgorithm::multigamma, cfg, rng);
    } catch (const DiagnosticFailure& e) {
        thrown = true;
        EXPECT_LE(e.flips_used, 5u);
    }
    EXPECT_TRUE(thrown);
}

TEST(DiagnosedKernel, Validation)
{
    const auto chain = testing_support::five_state_chain();
    EXPECT_THROW(DiagnosedKernel<FiniteChain>(chain, 0.0, 10, 1), ConfigError);
    EXPECT_THROW(DiagnosedKernel<FiniteChain>(chain, 0.5, 0, 1), ConfigError);
}
