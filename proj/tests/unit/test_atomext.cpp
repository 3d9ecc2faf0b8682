#include "atomsim/atomext.hpp"
#include "atomsim/diagnostics.hpp"
#include "atomsim/models/finite.hpp"

#include "fk_models.hpp"
#include "stats.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace atomsim;
using testing_support::RunningStats;
using testing_support::z_score;
using atomsim::reference::exact_increments;

namespace {

/// Exact extended path measure by enumeration: the weight of every base path times (1 - b), plus the atom path.
struct ExtendedEnumeration {
    PathEnumeration base;
    double atom_weight = 0.0;
    double total = 0.0;
};

ExtendedEnumeration enumerate_extended(const FiniteFKModel& m, double b, const std::vector<double>& psi)
{
    ExtendedEnumeration e{enumerate_paths(m)};
    e.atom_weight = b;
    for (double v : psi)
        e.atom_weight *= v;
    e.total = (1.0 - b) * e.base.gamma_n1 + e.atom_weight;
    return e;
}

} // namespace

TEST(Extended, AtomComparesOnlyToAtom)
{
    using E = Extended<int>;
    EXPECT_EQ(E::atom(), E::atom());
    EXPECT_NE(E::atom(), E::of(0));
    EXPECT_EQ(E::of(3), E::of(3));
    EXPECT_TRUE(E::atom().is_atom());
    EXPECT_FALSE(E::of(0).is_atom());
}

TEST(ExtendedModel, InitialMassAbsorptionAndPotentials)
{
    const auto ext = extend_model(testing_support::small_fk_model(), 0.3, {2.0, 3.0, 4.0});
    RandomStream rng(1);
    int atoms = 0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        auto z = ext.sample_initial(rng);
        const bool start_atom = z.is_atom();
        atoms += start_atom;
        for (std::size_t t = 1; t < 3; ++t) {
            z = ext.sample_transition(t, z, rng);
            ASSERT_EQ(z.is_atom(), start_atom);
        }
    }
    EXPECT_LT(z_score(static_cast<double>(atoms) / n, 0.3, testing_support::binomial_se(0.3, n)), 4.0);
    EXPECT_DOUBLE_EQ(ext.log_potential(1, Extended<std::size_t>::atom()), std::log(3.0));
    EXPECT_DOUBLE_EQ(ext.log_potential(1, Extended<std::size_t>::of(1)), std::log(1.0));
    EXPECT_EQ(ext.atom_path().size(), 3u);
}

TEST(ExtendedModel, RejectsBadParameters)
{
    const auto m = testing_support::small_fk_model();
    EXPECT_THROW(extend_model(m, 0.0, {1, 1, 1}), ConfigError);
    EXPECT_THROW(extend_model(m, 1.0, {1, 1, 1}), ConfigError);
    EXPECT_THROW(extend_model(m, 0.5, {1, 1}), ConfigError);
    EXPECT_THROW(extend_model(m, 0.5, {1, -1, 1}), ConfigError);
}

TEST(MixtureWeight, MatchesEnumeration)
{
    const auto m = testing_support::small_fk_model(1);
    const double b = 0.4;
    const std::vector<double> psi{0.37};
    const auto e = enumerate_extended(m, b, psi);
    const double k_enum = (1.0 - b) * e.base.gamma_n1 / e.total;
    EXPECT_NEAR(mixture_weight_k(b, psi, e.base.gamma_n1), k_enum, 1e-14);
    const double g1 = e.base.gamma_n1;
    EXPECT_NEAR(k_enum, (1 - b) / (1 - b + b * psi[0] / g1), 1e-14);
}

TEST(MixtureWeight, ExactIncrementsGiveOneMinusB)
{
    const auto m = testing_support::small_fk_model();
    const double gamma = finite_gamma_sequence(m).back();
    EXPECT_NEAR(mixture_weight_k(0.5, exact_increments(m), gamma), 0.5, 1e-12);
    EXPECT_NEAR(mixture_weight_k(0.2, exact_increments(m), gamma), 0.8, 1e-12);
}

TEST(MixtureWeight, LimitsAndMonotonicity)
{
    EXPECT_NEAR(mixture_weight_k(1e-12, {1.0, 1.0}, 1.0), 1.0, 1e-11);
    const double base = mixture_weight_k(0.5, {1.0, 2.0, 3.0}, 5.0);
    EXPECT_LT(mixture_weight_k(0.5, {1.0, 4.0, 3.0}, 5.0), base);
    // Extreme magnitudes stay finite in log space.
    const double k = mixture_weight_k_log(0.5, std::vector<double>(400, 1e-300), -1e5);
    EXPECT_GE(k, 0.0);
    EXPECT_LE(k, 1.0);
    EXPECT_THROW(mixture_weight_k(0.5, {1.0}, 0.0), ConfigError);
}

TEST(ExtendedModel, ConditioningOnNonAtomRecoversPathMeasure)
{
    const auto m = testing_support::small_fk_model();
    const auto e = enumerate_extended(m, 0.5, {0.8, 0.5, 0.6});
    const auto pi = e.base.normalized();
    const double k = mixture_weight_k(0.5, {0.8, 0.5, 0.6}, e.base.gamma_n1);
    for (std::size_t i = 0; i < pi.size(); ++i) {
        const double extended_mass = 0.5 * e.base.weight[i] / e.total;
        EXPECT_NEAR(extended_mass, k * pi[i], 1e-14);
    }
    EXPECT_NEAR(e.atom_weight / e.total, 1.0 - k, 1e-14);
}

TEST(TunePsi, FlatModelGivesUnitPsi)
{
    RandomStream rng(2);
    const auto rep = tune_psi(testing_support::flat_fk_model(), 50, 5, rng);
    for (double v : rep.psi)
        EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(TunePsi, IncrementsAndAtomMass)
{
    const auto m = testing_support::small_fk_model();
    const auto exact = exact_increments(m);
    RandomStream rng(3);
    const auto rep = tune_psi(m, 20000, 40, rng);
    ASSERT_EQ(rep.psi.size(), 3u);
    for (std::size_t t = 0; t < 3; ++t)
        EXPECT_NEAR(rep.psi[t] / exact[t], 1.0, 0.03) << "t=" << t;

    // Exact atom mass of the extended target with the tuned psi.
    const auto e = enumerate_extended(m, rep.b, rep.psi);
    const double atom_mass = e.atom_weight / e.total;
    RunningStats s;
    for (double v : rep.atom_mass_estimates)
        s.add(v);
    EXPECT_LT(z_score(s.mean(), atom_mass, s.se()), 4.0);
    EXPECT_LE(rep.atom_mass_lower, rep.atom_mass_mean);
    EXPECT_DOUBLE_EQ(rep.beta_recommendation, rep.safety * rep.atom_mass_lower);
    EXPECT_GT(rep.beta_recommendation, 0.1);
}

TEST(TunePsi, RejectsTinyRuns)
{
    RandomStream rng(4);
    EXPECT_THROW(tune_psi(testing_support::small_fk_model(), 1, 5, rng), ConfigError);
    EXPECT_THROW(tune_psi(testing_support::small_fk_model(), 10, 0, rng), ConfigError);
}

TEST(Bounds, EpsilonN)
{
    EXPECT_NEAR(epsilon_N_bound(10, 1.0, 3), std::pow(0.9, 3), 1e-15);
    for (double F : {2.0, 15.5})
        for (std::size_t n : {10u, 100u}) {
            const auto N = particles_for_epsilon(F, n, 0.75);
            EXPECT_GE(epsilon_N_bound(N, F, n), 0.75) << "F=" << F << " n=" << n;
            EXPECT_LT(epsilon_N_bound(N - 1, F, n), 0.75) << "F=" << F << " n=" << n;
            // The linear rule meets the exponential guarantee but needs fewer particles than the closed form.
            const auto linear = particles_linear_rule(F, n, 0.75);
            EXPECT_GE(std::exp(-2.0 * (F - 1.0) * static_cast<double>(n) / static_cast<double>(linear)), 0.75);
            EXPECT_LE(linear, N);
        }
    EXPECT_EQ(particles_linear_rule(2.0, 10, 0.75), 70u);
    double prev = 0.0;
    for (std::size_t N = 2; N < 2000; N += 37) {
        const double v = epsilon_N_bound(N, 3.0, 20);
        EXPECT_GT(v, prev);
        EXPECT_LT(epsilon_N_bound(N, 3.5, 20), v);
        EXPECT_LT(epsilon_N_bound(N, 3.0, 21), v);
        prev = v;
    }
    EXPECT_THROW(epsilon_N_bound(1, 2.0, 3), ConfigError);
    EXPECT_THROW(epsilon_N_bound(5, 0.5, 3), ConfigError);
}

TEST(Bounds, RadonNikodymAndCheck)
{
    EXPECT_NEAR(rn_derivative_bound(10, 1.0, 5), 1.0, 1e-15);
    EXPECT_NEAR(rn_derivative_bound(10, 2.0, 1), 1.2, 1e-15);
    EXPECT_DOUBLE_EQ(bound_F_check(15.5, 1.0, 100), 15.5);
    EXPECT_NEAR(bound_F_check(15.5, 1.02, 100), 15.5 * std::pow(1.02, 100), 1e-9);
    EXPECT_NEAR(bound_F_check(15.5, 1.02, 100), 112.3, 0.05);
    EXPECT_THROW(bound_F_check(2.0, 0.9, 3), ConfigError);
}

TEST(Bounds, OneAndMStep)
{
    EXPECT_DOUBLE_EQ(bound_F_one_step(1.0, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(bound_F_m_step(2.0, 3.0), bound_F_one_step(2.0, 3.0));
    EXPECT_THROW(bound_F_one_step(0.0, 1.0), ConfigError);
}

TEST(PathKernel, AtomPathIsAbsorbingState)
{
    const auto ext = extend_model(testing_support::small_fk_model(), 0.5, exact_increments(testing_support::small_fk_model()));
    const PathKernel kernel(ext, 4);
    EXPECT_TRUE(kernel.is_atom(kernel.atom()));
    RandomStream rng(5);
    for (int i = 0; i < 100; ++i) {
        const auto y = kernel.sample(kernel.atom(), rng);
        // A path is either the atom path or atom-free.
        const bool atom = kernel.is_atom(y);
        for (const auto& z : y)
            ASSERT_EQ(z.is_atom(), atom);
    }
}

namespace {

/// Lower bound on the atom-hitting probability of the path kernel over every path, for a safe beta.
double path_kernel_beta(const ExtendedModel<FiniteFKModel>& ext, std::size_t N, RandomStream& rng)
{
    const PathKernel kernel(ext, N);
    const auto e = enumerate_paths(ext.base());
    std::vector<PathKernel<FiniteFKModel>::State> probes{kernel.atom()};
    for (std::size_t k = 0; k < e.weight.size(); ++k) {
        PathKernel<FiniteFKModel>::State x;
        for (auto z : e.path_of(k))
            x.push_back(Extended<std::size_t>::of(z));
        probes.push_back(x);
    }
    return 0.5 * estimate_p_lower(kernel, probes, 4000, rng);
}

} // namespace

TEST(PerfectPath, FiniteModelMatchesEnumeration)
{
    const auto m = testing_support::small_fk_model(2);
    const auto ext = extend_model(m, 0.5, exact_increments(m));
    RandomStream rng(6);
    const double beta = path_kernel_beta(ext, 3, rng);
    ASSERT_GT(beta, 0.05);
    const FactoryConfig cfg{beta, beta / 2};
    const auto e = enumerate_paths(m);
    const auto pi = e.normalized();
    for (auto algo : {SamplerAlgorithm::imputation, SamplerAlgorithm::multigamma}) {
        std::vector<std::uint64_t> counts(pi.size(), 0);
        for (int i = 0; i < 4000; ++i)
            ++counts[e.index_of(perfect_sample_path(ext, 3, cfg, algo, rng).path)];
        EXPECT_GT(testing_support::chi_square_pvalue(counts, pi), 1e-4) << to_string(algo);
    }
}

TEST(PerfectPath, ReproducibleAndBudgetAdvice)
{
    const auto m = testing_support::small_fk_model(2);
    const auto psi = exact_increments(m);
    const FactoryConfig cfg{0.2, 0.1};
    RandomStream a(7), b(7);
    for (int i = 0; i < 20; ++i)
        EXPECT_EQ(perfect_sample_path(m, 3, 0.5, psi, cfg, SamplerAlgorithm::imputation, a).path,
                  perfect_sample_path(m, 3, 0.5, psi, cfg, SamplerAlgorithm::imputation, b).path);

    FactoryConfig tight = cfg;
    tight.flip_budget = 1;
    bool thrown = false;
    for (int i = 0; i < 200 && !thrown; ++i) {
        try {
            perfect_sample_path(m, 3, 0.5, psi, tight, SamplerAlgorithm::imputation, a);
        } catch (const BudgetExceeded& e) {
            thrown = true;
            EXPECT_NE(std::string(e.what()).find("lower beta"), std::string::npos);
        }
    }
    EXPECT_TRUE(thrown);
}
