#include "atomsim/random.hpp"

#include "stats.hpp"

#include <gtest/gtest.h>

#include <set>

using atomsim::RandomStream;
using testing_support::RunningStats;

TEST(RandomStream, SameSeedSameSequence)
{
    RandomStream a(42), b(42);
    for (int i = 0; i < 1000; ++i)
        ASSERT_EQ(a.next_u64(), b.next_u64());
    EXPECT_TRUE(a == b);
}

TEST(RandomStream, DifferentSeedsDiffer)
{
    RandomStream a(1), b(2);
    int equal = 0;
    for (int i = 0; i < 100; ++i)
        equal += a.next_u64() == b.next_u64();
    EXPECT_EQ(equal, 0);
}

TEST(RandomStream, SubstreamDoesNotAdvanceParent)
{
    RandomStream a(7), b(7);
    auto child = a.substream(3);
    (void)child.next_u64();
    EXPECT_TRUE(a == b);
    EXPECT_EQ(child.seed(), atomsim::derive_seed(7, 3));
}

TEST(RandomStream, DerivedSeedsAreDistinct)
{
    std::set<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 10000; ++i)
        seen.insert(atomsim::derive_seed(99, i));
    EXPECT_EQ(seen.size(), 10000u);
}

TEST(RandomStream, UniformRangeAndMoments)
{
    RandomStream rng(5);
    RunningStats s;
    for (int i = 0; i < 200000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        s.add(u);
    }
    EXPECT_LT(testing_support::z_score(s.mean(), 0.5, s.se()), 4.0);
    EXPECT_NEAR(s.variance(), 1.0 / 12.0, 0.002);
}

TEST(RandomStream, UniformPosIsPositive)
{
    RandomStream rng(6);
    for (int i = 0; i < 100000; ++i)
        ASSERT_GT(rng.uniform_pos(), 0.0);
}

TEST(RandomStream, GeometricMean)
{
    RandomStream rng(8);
    for (double p : {0.1, 0.5, 0.9}) {
        RunningStats s;
        for (int i = 0; i < 100000; ++i) {
            const auto g = rng.geometric(p);
            ASSERT_GE(g, 1u);
            s.add(static_cast<double>(g));
        }
        EXPECT_LT(testing_support::z_score(s.mean(), 1.0 / p, s.se()), 4.0) << "p=" << p;
    }
    EXPECT_EQ(rng.geometric(1.0), 1u);
    EXPECT_THROW(rng.geometric(0.0), std::invalid_argument);
    EXPECT_THROW(rng.geometric(1.5), std::invalid_argument);
}

TEST(RandomStream, GeometricPmf)
{
    RandomStream rng(9);
    const double p = 0.3;
    std::vector<std::uint64_t> counts(12, 0);
    std::vector<double> probs(12);
    for (int k = 0; k < 11; ++k)
        probs[k] = p * std::pow(1 - p, k);
    probs[11] = std::pow(1 - p, 11);
    for (int i = 0; i < 100000; ++i)
        ++counts[std::min<std::uint64_t>(rng.geometric(p), 12) - 1];
    EXPECT_GT(testing_support::chi_square_pvalue(counts, probs), 1e-4);
}

TEST(RandomStream, NormalMoments)
{
    RandomStream rng(10);
    RunningStats s;
    RunningStats sq;
    for (int i = 0; i < 200000; ++i) {
        const double z = rng.normal(1.0, 2.0);
        s.add(z);
        sq.add((z - 1.0) * (z - 1.0));
    }
    EXPECT_LT(testing_support::z_score(s.mean(), 1.0, s.se()), 4.0);
    EXPECT_LT(testing_support::z_score(sq.mean(), 4.0, sq.se()), 4.0);
}

TEST(RandomStream, IndexCoversRange)
{
    RandomStream rng(11);
    std::vector<std::uint64_t> counts(7, 0);
    for (int i = 0; i < 70000; ++i)
        ++counts[rng.index(7)];
    EXPECT_GT(testing_support::chi_square_pvalue(counts, std::vector<double>(7, 1.0 / 7)), 1e-4);
}

TEST(SampleCategorical, MatchesWeights)
{
    RandomStream rng(12);
    const std::vector<double> w{1.0, 0.0, 3.0, 6.0};
    std::vector<std::uint64_t> counts(4, 0);
    for (int i = 0; i < 100000; ++i)
        ++counts[atomsim::sample_categorical(w, 10.0, rng)];
    EXPECT_EQ(counts[1], 0u);
    EXPECT_GT(testing_support::chi_square_pvalue(counts, {0.1, 0.0, 0.3, 0.6}), 1e-4);
}
