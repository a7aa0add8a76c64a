#include "tdabias/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "tdabias/oracles.hpp"
#include "tdabias/persistence.hpp"

namespace tdabias::selftest {

namespace {

bool same_multiset(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
}

}  // namespace

SuiteResult persistence_suite(std::uint64_t seed) {
    SuiteResult r{"persistence-sweep", true, ""};
    std::mt19937_64 rng(seed);
    int checked = 0;
    for (int trial = 0; trial < 200 && r.passed; ++trial) {
        const int nodes = 3 + trial % 10;
        const auto g = oracles::random_graph(nodes, rng, trial % 2 ? 0.4 : 0.0);
        const auto fast = compute_persistence(g);
        const auto slow = brute_force_persistence(g);
        if (!same_multiset(fast.births_0d, slow.births_0d) || !same_multiset(fast.deaths_1d, slow.deaths_1d)) {
            r.passed = false;
            r.detail = fmt::format("mismatch on trial {} ({} nodes)", trial, nodes);
        }
        ++checked;
    }
    if (r.passed) r.detail = fmt::format("{} graphs", checked);
    return r;
}

SuiteResult swap_recompute_suite(std::uint64_t seed, const SwapMatrixFn& build) {
    SuiteResult r{"swap-recompute", true, ""};
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
        const auto triple = oracles::random_triple(3 + trial % 8, 4 + trial % 5, rng);
        const auto a = build(triple);
        for (int i = 0; i < triple.n(); ++i)
            for (int j = 0; j < triple.n(); ++j) {
                const double expected = oracles::swap_delta_by_recompute(triple, i, j);
                const double err = std::abs(a(i, j) - expected) / std::max(1.0, std::abs(expected));
                worst = std::max(worst, err);
            }
    }
    r.passed = worst <= 1e-9;
    r.detail = fmt::format("max relative error {:.3g}", worst);
    return r;
}

SuiteResult moment_enumeration_suite(std::uint64_t seed) {
    SuiteResult r{"moment-enumeration", true, ""};
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int n = 1; n <= 4; ++n)
        for (int rep = 0; rep < 5; ++rep) {
            const auto a = oracles::random_swap_matrix(n, rng);
            for (int t = 1; t <= n; ++t) {
                const auto closed = conditional_moments(a, t);
                const auto exact = oracles::enumerate_swap_moments(a, t);
                worst = std::max({worst, std::abs(closed.mean - exact.mean),
                                  std::abs(closed.variance - exact.variance)});
            }
        }
    r.passed = worst <= 1e-12;
    r.detail = fmt::format("max abs error {:.3g}", worst);
    return r;
}

SuiteResult monte_carlo_suite(std::uint64_t seed) {
    SuiteResult r{"monte-carlo", true, ""};
    std::mt19937_64 rng(seed);
    const auto a = oracles::random_swap_matrix(8, rng);
    double worst = 0.0;
    for (int t = 1; t <= 8; ++t) {
        const auto closed = conditional_moments(a, t);
        const auto mc = oracles::sample_swap_moments(a, t, 100000, rng);
        worst = std::max(worst, std::abs(closed.mean - mc.mean) / mc.mean_se);
        if (mc.variance_se > 0.0) worst = std::max(worst, std::abs(closed.variance - mc.variance) / mc.variance_se);
    }
    r.passed = worst <= 3.0;
    r.detail = fmt::format("worst deviation {:.2f} standard errors", worst);
    return r;
}

std::vector<SuiteResult> run_all(std::uint64_t seed) {
    return {persistence_suite(seed), swap_recompute_suite(seed), moment_enumeration_suite(seed),
            monte_carlo_suite(seed)};
}

}  // namespace tdabias::selftest
