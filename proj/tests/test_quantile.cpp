#include "tdabias/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "tdabias/oracles.hpp"

namespace tdabias {
namespace {

using Values = std::vector<double>;

Values random_values(std::mt19937_64& rng, int m) {
    std::normal_distribution<double> g(0.3, 1.0);
    Values v(static_cast<std::size_t>(m));
    for (auto& x : v) x = g(rng);
    return v;
}

// Pairs up the k-th smallest values of two equal-size sets.
double sorted_pairing_distance(Values a, Values b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

// Midpoint-rule integral of F^-1 over step k, with enough points that every
// value block is resolved exactly (blocks and steps align on a 1/(N m) grid).
double step_by_fine_grid(const QuantileFunction& q, int N, int k) {
    const int m = static_cast<int>(q.size());
    const int per_step = m;  // N*m cells in total, per_step per step
    double s = 0.0;
    for (int c = 0; c < per_step; ++c) {
        const double z = (static_cast<double>(k) * per_step + c + 0.5) / (static_cast<double>(N) * m);
        s += q(z);
    }
    return s / per_step;
}

TEST(BuildQuantile, SortsAndRejectsEmpty) {
    const auto q = build_quantile({0.9, 0.2, 0.5});
    EXPECT_EQ(Values(q.values().begin(), q.values().end()), (Values{0.2, 0.5, 0.9}));
    const auto single = build_quantile({0.4});
    EXPECT_EQ(single(0.0), 0.4);
    EXPECT_EQ(single(0.99), 0.4);
    try {
        build_quantile({});
        FAIL();
    } catch (const EmptyPersistenceSet& e) {
        EXPECT_STREQ(e.what(), "empty persistence set");
    }
    EXPECT_THROW(build_quantile({1.0, NAN}), std::invalid_argument);
}

TEST(QuantileFunction, SmallestValueReachingLevel) {
    const auto q = build_quantile({0.2, 0.5, 0.9});
    EXPECT_EQ(q(0.0), 0.2);
    EXPECT_EQ(q(0.33), 0.2);
    EXPECT_EQ(q(0.34), 0.5);
    EXPECT_EQ(q(0.67), 0.9);
    EXPECT_EQ(q(1.0), 0.9);
}

TEST(Approximate, SmallCases) {
    const auto q = build_quantile({0.0, 1.0});
    EXPECT_EQ(approximate(q, 2), StepQuantile({0.0, 1.0}));
    EXPECT_EQ(approximate(q, 1), StepQuantile({0.5}));
    EXPECT_EQ(approximate(q, 4), StepQuantile({0.0, 0.0, 1.0, 1.0}));
    EXPECT_EQ(approximate(build_quantile({3.0, 6.0, 9.0}), 2), StepQuantile({4.0, 8.0}));
    EXPECT_THROW(approximate(q, 0), std::invalid_argument);
}

TEST(Approximate, MatchesFineGridIntegral) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const int m = 1 + trial % 9;
        const int N = 1 + (trial * 7) % 13;
        const auto q = build_quantile(random_values(rng, m));
        const auto s = approximate(q, N);
        ASSERT_EQ(s.N(), N);
        for (int k = 0; k < N; ++k) EXPECT_NEAR(s[static_cast<std::size_t>(k)], step_by_fine_grid(q, N, k), 1e-12);
    }
}

TEST(Approximate, IdentityMeanAndMonotone) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        const int m = 1 + trial % 30;
        auto values = random_values(rng, m);
        const auto q = build_quantile(values);
        std::sort(values.begin(), values.end());
        const auto same = approximate(q, m);
        EXPECT_EQ(Values(same.steps().begin(), same.steps().end()), values);

        const int N = 1 + (trial * 11) % 50;
        const auto s = approximate(q, N);
        const double step_mean = std::accumulate(s.steps().begin(), s.steps().end(), 0.0) / N;
        const double value_mean = std::accumulate(values.begin(), values.end(), 0.0) / m;
        EXPECT_NEAR(step_mean, value_mean, 1e-12);
        EXPECT_TRUE(std::is_sorted(s.steps().begin(), s.steps().end()));
    }
}

TEST(StepQuantile, Validation) {
    EXPECT_THROW(StepQuantile({}), std::invalid_argument);
    EXPECT_THROW(StepQuantile({1.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(StepQuantile({0.0, INFINITY}), std::invalid_argument);
}

TEST(Distance, Examples) {
    const StepQuantile a({0.0, 1.0}), b({1.0, 1.0});
    EXPECT_EQ(distance(a, a), 0.0);
    EXPECT_EQ(distance(a, b), 0.5);
    EXPECT_EQ(distance(b, a), 0.5);
    EXPECT_THROW(distance(a, StepQuantile({1.0})), std::invalid_argument);
}

TEST(Distance, NEqualsMMatchesSortedPairing) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const int m = 1 + trial % 25;
        const auto x = random_values(rng, m), y = random_values(rng, m);
        const double d = distance(approximate(build_quantile(x), m), approximate(build_quantile(y), m));
        EXPECT_NEAR(d, sorted_pairing_distance(x, y), 1e-12);
    }
}

TEST(Distance, MetricProperties) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        const int N = 1 + trial % 12;
        const auto a = oracles::random_step_quantile(N, rng);
        const auto b = oracles::random_step_quantile(N, rng);
        const auto c = oracles::random_step_quantile(N, rng);
        EXPECT_GE(distance(a, b), 0.0);
        EXPECT_EQ(distance(a, b), distance(b, a));
        EXPECT_LE(std::sqrt(distance(a, c)), std::sqrt(distance(a, b)) + std::sqrt(distance(b, c)) + 1e-12);
        if (!(a == b)) {
            EXPECT_GT(distance(a, b), 0.0);
        }
    }
}

TEST(Distance, Translation) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> shift(-2.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int N = 1 + trial % 10;
        const auto a = oracles::random_step_quantile(N, rng);
        const auto b = oracles::random_step_quantile(N, rng);
        const double c = shift(rng);
        auto shifted = [&](const StepQuantile& s) {
            Values v(s.steps().begin(), s.steps().end());
            for (double& x : v) x += c;
            return StepQuantile(v);
        };
        EXPECT_NEAR(distance(shifted(a), shifted(b)), distance(a, b), 1e-12);
        const double mean_a = std::accumulate(a.steps().begin(), a.steps().end(), 0.0) / N;
        const double mean_b = std::accumulate(b.steps().begin(), b.steps().end(), 0.0) / N;
        EXPECT_NEAR(distance(shifted(a), b), distance(a, b) + c * c + 2.0 * c * (mean_a - mean_b), 1e-11);
    }
}

}  // namespace
}  // namespace tdabias
