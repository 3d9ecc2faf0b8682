#include "atomsim/models/finite.hpp"
#include "atomsim/smc.hpp"

#include "fk_models.hpp"
#include "stats.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace atomsim;
using testing_support::RunningStats;
using testing_support::z_score;

namespace {

/// Model whose potential vanishes everywhere at step `dead`.
struct DyingModel {
    using Point = double;
    std::size_t dead = 1;
    std::size_t horizon() const { return 3; }
    double sample_initial(RandomStream& rng) const { return rng.normal(); }
    double sample_transition(std::size_t, double z, RandomStream& rng) const { return z + rng.normal(); }
    double log_potential(std::size_t t, double) const
    {
        return t == dead ? -std::numeric_limits<double>::infinity() : 0.0;
    }
};

/// Declares a bound of log 0.5 but returns 0.
struct LyingModel {
    using Point = double;
    std::size_t horizon() const { return 2; }
    double sample_initial(RandomStream& rng) const { return rng.normal(); }
    double sample_transition(std::size_t, double z, RandomStream&) const { return z; }
    double log_potential(std::size_t, double) const { return 0.0; }
    double log_potential_upper(std::size_t) const { return std::log(0.5); }
};

static_assert(FeynmanKacModel<FiniteFKModel>);
static_assert(BoundedPotentialModel<LyingModel>);
static_assert(!BoundedPotentialModel<DyingModel>);

} // namespace

TEST(RunSmc, ShapesAndAncestry)
{
    const auto model = testing_support::small_fk_model();
    RandomStream rng(1);
    const auto v = run_smc(model, 7, rng);
    ASSERT_EQ(v.horizon(), 3u);
    ASSERT_EQ(v.size(), 7u);
    EXPECT_TRUE(v.ancestors[0].empty());
    for (std::size_t t = 1; t < 3; ++t) {
        ASSERT_EQ(v.ancestors[t].size(), 7u);
        for (auto a : v.ancestors[t])
            EXPECT_LT(a, 7u);
    }
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t i = 0; i < 7; ++i)
            EXPECT_DOUBLE_EQ(v.log_potentials[t][i], model.log_potential(t, v.particles[t][i]));
    const auto lin = v.lineage(4);
    EXPECT_EQ(lin.back(), 4u);
    EXPECT_EQ(lin[1], v.ancestors[2][4]);
    EXPECT_EQ(lin[0], v.ancestors[1][lin[1]]);
}

TEST(RunSmc, RejectsBadArguments)
{
    const auto model = testing_support::small_fk_model();
    RandomStream rng(2);
    EXPECT_THROW(run_smc(model, 0, rng), ConfigError);
}

TEST(RunSmc, ParticleDeathReportsStep)
{
    RandomStream rng(3);
    for (std::size_t dead : {0u, 1u, 2u}) {
        try {
            run_smc(DyingModel{dead}, 10, rng);
            FAIL() << "expected ParticleDeath";
        } catch (const ParticleDeath& e) {
            EXPECT_EQ(e.step, dead);
        }
    }
}

TEST(RunSmc, DeclaredBoundIsChecked)
{
    RandomStream rng(4);
    EXPECT_THROW(run_smc(LyingModel{}, 5, rng), ContractViolation);
}

TEST(RunSmc, ReproducibleForSameSeed)
{
    const auto model = testing_support::small_fk_model();
    RandomStream a(5), b(5);
    const auto v = run_smc(model, 20, a);
    const auto w = run_smc(model, 20, b);
    EXPECT_EQ(v.particles, w.particles);
    EXPECT_EQ(v.ancestors, w.ancestors);
}

TEST(Estimators, NormalizingConstantIsUnbiased)
{
    const auto model = testing_support::small_fk_model();
    const double truth = finite_gamma_sequence(model).back();
    EXPECT_NEAR(truth, enumerate_paths(model).gamma_n1, 1e-14);
    RandomStream rng(6);
    for (std::size_t N : {1u, 2u, 5u}) {
        RunningStats s;
        for (int i = 0; i < 40000; ++i)
            s.add(std::exp(estimate_log_nc(run_smc(model, N, rng))));
        EXPECT_LT(z_score(s.mean(), truth, s.se()), 4.0) << "N=" << N;
    }
}

TEST(Estimators, GammaOfPathFunctionIsUnbiased)
{
    const auto model = testing_support::small_fk_model();
    const auto e = enumerate_paths(model);
    auto f = [](const Path<std::size_t>& p) { return static_cast<double>(p[0] + 2 * p[2]); };
    double truth = 0.0;
    for (std::size_t k = 0; k < e.weight.size(); ++k)
        truth += e.weight[k] * f(e.path_of(k));
    RandomStream rng(7);
    RunningStats s;
    for (int i = 0; i < 40000; ++i)
        s.add(estimate_gamma_f(run_smc(model, 3, rng), f));
    EXPECT_LT(z_score(s.mean(), truth, s.se()), 4.0);
}

TEST(Estimators, LogMeanExpIsStable)
{
    EXPECT_NEAR(detail::log_mean_exp({-1000.0, -1000.0}), -1000.0, 1e-12);
    EXPECT_NEAR(detail::log_mean_exp({0.0, std::log(3.0)}), std::log(2.0), 1e-12);
    EXPECT_EQ(detail::log_mean_exp({-INFINITY, -INFINITY}), -INFINITY);
}

TEST(ConditionalSmc, ReferencePathOccupiesItsSlots)
{
    const auto model = testing_support::small_fk_model();
    RandomStream rng(8);
    const Path<std::size_t> ref{2, 0, 1};
    for (int rep = 0; rep < 50; ++rep) {
        const auto cond = run_csmc(model, 4, ref, rng);
        EXPECT_EQ(cond.system.path_of(cond.lineage), ref);
        for (std::size_t t = 1; t < 3; ++t)
            EXPECT_EQ(cond.system.ancestors[t][cond.lineage[t]], cond.lineage[t - 1]);
    }
}

TEST(ConditionalSmc, SingleParticleIsIdentity)
{
    const auto model = testing_support::small_fk_model();
    RandomStream rng(9);
    const Path<std::size_t> ref{1, 2, 0};
    for (int rep = 0; rep < 100; ++rep)
        EXPECT_EQ(icsmc_step(model, 1, ref, rng), ref);
}

TEST(ConditionalSmc, WrongReferenceLength)
{
    const auto model = testing_support::small_fk_model();
    RandomStream rng(10);
    EXPECT_THROW(run_csmc(model, 3, Path<std::size_t>{0, 1}, rng), ConfigError);
}

TEST(ConditionalSmc, KernelLeavesPathMeasureInvariant)
{
    const auto model = testing_support::small_fk_model();
    const auto e = enumerate_paths(model);
    const auto pi = e.normalized();
    RandomStream rng(11);
    std::vector<std::uint64_t> counts(pi.size(), 0);
    for (int i = 0; i < 100000; ++i) {
        const auto x = testing_support::draw_exact_path(e, pi, rng);
        ++counts[e.index_of(icsmc_step(model, 3, x, rng))];
    }
    EXPECT_GT(testing_support::chi_square_pvalue(counts, pi), 1e-4);
}

TEST(SelfNormalized, UnbiasedGivenExactReference)
{
    const auto model = testing_support::small_fk_model();
    const auto e = enumerate_paths(model);
    const auto pi = e.normalized();
    auto f = [](const Path<std::size_t>& p) { return static_cast<double>(p[0] + p[1] * p[2]); };
    double truth = 0.0;
    for (std::size_t k = 0; k < pi.size(); ++k)
        truth += pi[k] * f(e.path_of(k));
    RandomStream rng(12);
    RunningStats s;
    for (int i = 0; i < 40000; ++i) {
        const auto x = testing_support::draw_exact_path(e, pi, rng);
        s.add(self_normalized_unbiased(x, model, 2, f, rng));
    }
    EXPECT_LT(z_score(s.mean(), truth, s.se()), 4.0);
}

using ToyPathModel = atomsim::reference::RegenToyModel;

TEST(RegenEstimator, ToyMeanMatchesClosedForm)
{
    const double q = 0.5;
    const double r = 0.25;
    RegenEstimatorSpec spec;
    spec.first_regen_sampler = [q](RandomStream& rng) { return rng.geometric(q); };
    spec.g_sample = [r](RandomStream& rng) { return rng.geometric(r); };
    spec.g_pmf = [r](std::uint64_t k) { return r * std::pow(1.0 - r, static_cast<double>(k - 1)); };
    spec.gamma_f_estimator = [q](std::uint64_t k, RandomStream& rng) {
        const auto v = run_smc(ToyPathModel{k, q}, 4, rng);
        return estimate_gamma_f(v, [](const Path<int>& p) { return static_cast<double>(p.back()); });
    };
    RandomStream rng(13);
    RunningStats s;
    for (int i = 0; i < 40000; ++i)
        s.add(unbiased_pi_f_regen(spec, rng));
    EXPECT_LT(z_score(s.mean(), 2.0 * (1.0 - q), s.se()), 4.0);
}

TEST(RegenEstimator, ZeroPmfIsAConfigError)
{
    RegenEstimatorSpec spec;
    spec.first_regen_sampler = [](RandomStream&) { return std::uint64_t{1}; };
    spec.g_sample = [](RandomStream&) { return std::uint64_t{3}; };
    spec.g_pmf = [](std::uint64_t) { return 0.0; };
    spec.gamma_f_estimator = [](std::uint64_t, RandomStream&) { return 1.0; };
    RandomStream rng(14);
    EXPECT_THROW(unbiased_pi_f_regen(spec, rng), ConfigError);
}
