#include "atomsim/factory.hpp"

#include "huber_oracle.hpp"
#include "stats.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace atomsim;
using testing_support::binomial_se;
using testing_support::RunningStats;
using testing_support::z_score;

namespace {

double frequency(int n, auto&& trial)
{
    int hits = 0;
    for (int i = 0; i < n; ++i)
        hits += trial() ? 1 : 0;
    return static_cast<double>(hits) / n;
}

} // namespace

TEST(CoinSource, CountsFlips)
{
    RandomStream rng(1);
    auto coin = CoinSource::bernoulli(0.3);
    for (int i = 0; i < 17; ++i)
        coin.flip(rng);
    EXPECT_EQ(coin.flips_used(), 17u);
    EXPECT_EQ(coin.true_p().value(), 0.3);
    coin.reset_counter();
    EXPECT_EQ(coin.flips_used(), 0u);
}

TEST(FactoryConfig, Validation)
{
    EXPECT_NO_THROW(FactoryConfig{}.validate());
    EXPECT_THROW((FactoryConfig{0.3, 0.3}.validate()), ConfigError);
    EXPECT_THROW((FactoryConfig{0.0, 0.0}.validate()), ConfigError);
    EXPECT_THROW((FactoryConfig{1.2, 0.1}.validate()), ConfigError);
    const auto cfg = FactoryConfig::from_beta(0.4);
    EXPECT_DOUBLE_EQ(cfg.eps, 0.2);
}

TEST(ScaledCoin, RejectsInvalidScaling)
{
    RandomStream rng(1);
    auto coin = CoinSource::bernoulli(0.1);
    EXPECT_THROW(flip_scaled_coin(coin, 2.0, 0.5, rng), ConfigError);
    EXPECT_THROW(flip_scaled_coin(coin, 1.0, 0.2, rng), ConfigError);
}

TEST(ScaledCoin, ZeroCoinNeverSucceeds)
{
    RandomStream rng(2);
    auto coin = CoinSource::bernoulli(0.0);
    for (int i = 0; i < 2000; ++i)
        ASSERT_FALSE(flip_scaled_coin(coin, 1.25, 0.6, rng));
}

TEST(ScaledCoin, SuccessProbabilityMatchesScaledValue)
{
    RandomStream rng(3);
    struct Case {
        double C, b, q;
    };
    for (const auto& c : {Case{1.25, 0.6, 0.4}, Case{2.0, 0.4, 0.3}, Case{1.5, 0.5, 0.1}}) {
        auto coin = CoinSource::bernoulli(c.q);
        const int n = 60000;
        const double f = frequency(n, [&] { return flip_scaled_coin(coin, c.C, c.b, rng); });
        const double target = c.C * c.q;
        EXPECT_LT(z_score(f, target, binomial_se(target, n)), 4.0) << "C=" << c.C << " q=" << c.q;
    }
}

TEST(ScaledCoin, ExactSuccessProbabilityFromValueIteration)
{
    // Independent oracle: exact law of the walk by dynamic programming.
    const auto br = testing_support::scaled_coin_success(0.4, 1.25, 0.6);
    EXPECT_LT(br.upper - br.lower, 1e-6);
    EXPECT_NEAR(br.lower, 0.5, 1e-6);
}

TEST(ScaledCoin, BudgetIsEnforced)
{
    RandomStream rng(4);
    auto coin = CoinSource::bernoulli(0.0);
    int thrown = 0;
    for (int i = 0; i < 100; ++i) {
        try {
            flip_scaled_coin(coin, 1.25, 0.6, rng, nullptr, 0.5, 1);
        } catch (const BudgetExceeded& e) {
            ++thrown;
            EXPECT_EQ(e.flips_used, 1u);
        }
    }
    EXPECT_GE(thrown, 90);
}

TEST(OneMinusPCoin, Probability)
{
    RandomStream rng(5);
    const FactoryConfig cfg{0.4, 0.2};
    auto coin = CoinSource::bernoulli(0.5);
    const int n = 60000;
    const double f = frequency(n, [&] { return flip_one_minus_p_coin(coin, cfg, rng); });
    EXPECT_LT(z_score(f, 0.625, binomial_se(0.625, n)), 4.0);
}

TEST(OneMinusPCoin, CertainCoinGivesZero)
{
    RandomStream rng(6);
    const FactoryConfig cfg{0.4, 0.2};
    auto coin = CoinSource::bernoulli(1.0);
    for (int i = 0; i < 1000; ++i)
        ASSERT_FALSE(flip_one_minus_p_coin(coin, cfg, rng));
}

TEST(OneMinusPCoin, MeanRawFlipsBounded)
{
    RandomStream rng(7);
    for (double beta : {0.2, 0.4, 0.5}) {
        const auto cfg = FactoryConfig::from_beta(beta);
        for (double p : {beta, 0.5, 0.9}) {
            auto coin = CoinSource::bernoulli(p);
            FactoryStats stats;
            for (int i = 0; i < 20000; ++i)
                flip_one_minus_p_coin(coin, cfg, rng, &stats);
            const double mean = static_cast<double>(stats.raw_flips) / static_cast<double>(stats.subcoin_flips);
            EXPECT_LE(mean, 11.0) << "beta=" << beta << " p=" << p;
            EXPECT_EQ(stats.raw_flips, coin.flips_used());
        }
    }
}

TEST(RaceCoin, AlwaysHeadsSubcoinGivesOne)
{
    RandomStream rng(8);
    for (int i = 0; i < 1000; ++i)
        ASSERT_TRUE(race_eps_over_p([](RandomStream&) { return true; }, 0.2, rng));
}

TEST(RaceCoin, ProbabilityAndSubcoinCount)
{
    RandomStream rng(9);
    const double eps = 0.2;
    const double p = 0.5;
    const double sub = (1 - p) / (1 - eps);
    std::uint64_t calls = 0;
    const int n = 100000;
    const double f = frequency(n, [&] {
        return race_eps_over_p(
            [&](RandomStream& r) {
                ++calls;
                return r.bernoulli(sub);
            },
            eps, rng);
    });
    EXPECT_LT(z_score(f, eps / p, binomial_se(eps / p, n)), 4.0);
    // Each round draws a subcoin with probability 1 - eps, and the number of rounds is Geometric(p).
    EXPECT_NEAR(static_cast<double>(calls) / n, (1 - eps) / p, 0.03);
}

TEST(EpsOverPCoin, ProbabilityAndCostGrid)
{
    RandomStream rng(10);
    for (double beta : {0.2, 0.4}) {
        const auto cfg = FactoryConfig::from_beta(beta);
        for (double p : {beta, 0.5, 0.9}) {
            auto coin = CoinSource::bernoulli(p);
            const int n = 20000;
            RunningStats subcoins;
            int hits = 0;
            for (int i = 0; i < n; ++i) {
                FactoryStats stats;
                hits += flip_eps_over_p_coin(coin, cfg, rng, &stats) ? 1 : 0;
                subcoins.add(static_cast<double>(stats.subcoin_flips));
            }
            const double target = cfg.eps / p;
            EXPECT_LT(z_score(static_cast<double>(hits) / n, target, binomial_se(target, n)), 4.0)
                << "beta=" << beta << " p=" << p;
            EXPECT_LT(z_score(subcoins.mean(), (1 - cfg.eps) / p, subcoins.se()), 4.0)
                << "beta=" << beta << " p=" << p;
        }
    }
}

TEST(Factory, SameSeedSameOutputs)
{
    const auto cfg = FactoryConfig::from_beta(0.3);
    auto run = [&] {
        RandomStream rng(77);
        auto coin = CoinSource::bernoulli(0.45);
        FactoryStats stats;
        std::vector<bool> bits;
        for (int i = 0; i < 500; ++i)
            bits.push_back(flip_eps_over_p_coin(coin, cfg, rng, &stats));
        return std::make_pair(bits, stats.raw_flips);
    };
    EXPECT_EQ(run(), run());
}

TEST(SignProblem, NonnegativeIntegrandReturnsMagnitude)
{
    SignProblemSpec<double> spec;
    spec.mu_sampler = [](RandomStream& r) { return r.uniform(); };
    spec.phi = [](double x) { return x * x; };
    spec.delta = 0.1;
    spec.phi_sup = 1.0;
    RandomStream rng(11);
    for (int i = 0; i < 200; ++i) {
        RandomStream mirror = rng;
        const double x = mirror.uniform();
        ASSERT_EQ(sign_problem_estimate(spec, rng), x * x);
    }
}

TEST(SignProblem, SineOverThreeHalfPeriods)
{
    SignProblemSpec<double> spec;
    spec.mu_sampler = [](RandomStream& r) { return 3.0 * std::numbers::pi * r.uniform(); };
    spec.phi = [](double x) { return std::sin(x); };
    spec.delta = 0.2;
    spec.phi_sup = 1.0;
    const double truth = 2.0 / (3.0 * std::numbers::pi);
    RandomStream rng(12);
    RunningStats s;
    for (int i = 0; i < 50000; ++i) {
        const double w = sign_problem_estimate(spec, rng);
        ASSERT_GE(w, 0.0);
        ASSERT_LE(w, 1.0);
        s.add(w);
    }
    EXPECT_LT(z_score(s.mean(), truth, s.se()), 4.0);
}

TEST(SignProblem, DiscreteExampleAgainstExactWalkLaw)
{
    // mu uniform on {-1, +1, +1}, phi = identity: mu(phi) = 1/3, q = 1/3.
    SignProblemSpec<int> spec;
    spec.mu_sampler = [](RandomStream& r) { return r.index(3) == 0 ? -1 : 1; };
    spec.phi = [](int x) { return static_cast<double>(x); };
    spec.delta = 0.25;
    spec.phi_sup = 1.0;
    const double b = 0.5 - spec.delta / 2.0;
    const auto br = testing_support::scaled_coin_success(1.0 / 3.0, 2.0, b);
    ASSERT_LT(br.upper - br.lower, 1e-6);
    const double exact_mean = 1.0 - br.lower;
    EXPECT_NEAR(exact_mean, 1.0 / 3.0, 1e-6);

    RandomStream rng(13);
    const int n = 60000;
    const double f = frequency(n, [&] { return sign_problem_estimate(spec, rng) > 0.5; });
    EXPECT_LT(z_score(f, exact_mean, binomial_se(exact_mean, n)), 4.0);
}

TEST(SignProblem, BoundViolationIsReported)
{
    SignProblemSpec<double> spec;
    spec.mu_sampler = [](RandomStream&) { return 2.0; };
    spec.phi = [](double x) { return x; };
    spec.delta = 0.5;
    spec.phi_sup = 1.0;
    RandomStream rng(14);
    EXPECT_THROW(sign_problem_estimate(spec, rng), ContractViolation);
}

TEST(SignProblem, InvalidSpecRejected)
{
    SignProblemSpec<double> spec;
    spec.mu_sampler = [](RandomStream& r) { return r.uniform(); };
    spec.phi = [](double x) { return x; };
    spec.delta = 0.0;
    spec.phi_sup = 1.0;
    RandomStream rng(15);
    EXPECT_THROW(sign_problem_estimate(spec, rng), ConfigError);
    spec.delta = 2.0;
    EXPECT_THROW(sign_problem_estimate(spec, rng), ConfigError);
}

TEST(ConstrainedEstimate, ZeroShiftMatchesSignProblem)
{
    SignProblemSpec<double> spec;
    spec.mu_sampler = [](RandomStream& r) { return 3.0 * std::numbers::pi * r.uniform(); };
    spec.phi = [](double x) { return std::sin(x); };
    spec.delta = 0.2;
    spec.phi_sup = 1.0;
    RandomStream a(16), b(16);
    for (int i = 0; i < 500; ++i)
        ASSERT_EQ(constrained_unbiased_estimate(spec, -1.0, 0.0, 1.0, a), sign_problem_estimate(spec, b));
}

TEST(ConstrainedEstimate, DiscreteThreePointLaw)
{
    // phi uniform on {0.1, 0.5, 0.9}; shifted by b = 0.2 the estimate has range [0.2, 1.0].
    SignProblemSpec<double> spec;
    spec.mu_sampler = [](RandomStream& r) { return 0.1 + 0.4 * static_cast<double>(r.index(3)); };
    spec.phi = [](double x) { return x; };
    spec.delta = 0.45;
    RandomStream rng(17);
    RunningStats s;
    for (int i = 0; i < 60000; ++i) {
        const double w = constrained_unbiased_estimate(spec, 0.0, 0.2, 1.0, rng);
        ASSERT_GE(w, 0.2 - 1e-12);
        ASSERT_LE(w, 1.0 + 1e-12);
        s.add(w);
    }
    EXPECT_LT(z_score(s.mean(), 0.5, s.se()), 4.0);
}

TEST(ConstrainedEstimate, BernoulliIntegrand)
{
    // phi in {0, 1} with mean p; shifting by b < p gives an estimate in [b, 1].
    const double p = 0.6;
    SignProblemSpec<int> spec;
    spec.mu_sampler = [p](RandomStream& r) { return r.bernoulli(p) ? 1 : 0; };
    spec.phi = [](int x) { return static_cast<double>(x); };
    spec.delta = 0.5;
    RandomStream rng(18);
    RunningStats s;
    for (int i = 0; i < 60000; ++i) {
        const double w = constrained_unbiased_estimate(spec, 0.0, 0.25, 1.0, rng);
        ASSERT_GE(w, 0.25 - 1e-12);
        ASSERT_LE(w, 1.0 + 1e-12);
        s.add(w);
    }
    EXPECT_LT(z_score(s.mean(), p, s.se()), 4.0);
}

TEST(ConstrainedEstimate, OutOfRangeIntegrand)
{
    SignProblemSpec<double> spec;
    spec.mu_sampler = [](RandomStream&) { return 1.5; };
    spec.phi = [](double x) { return x; };
    spec.delta = 0.5;
    RandomStream rng(19);
    EXPECT_THROW(constrained_unbiased_estimate(spec, 0.0, 0.2, 1.0, rng), ContractViolation);
    EXPECT_THROW(constrained_unbiased_estimate(spec, 0.0, 0.6, 1.0, rng), ConfigError);
}
