#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tdabias/bias_stat.hpp"

namespace tdabias::selftest {

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

using SwapMatrixFn = std::function<SwapMatrix(const TripleCluster&)>;

/// compute_persistence against the filtration sweep on random small graphs.
SuiteResult persistence_suite(std::uint64_t seed);

/// Incremental swap matrix against full recomputation of every swap.
SuiteResult swap_recompute_suite(std::uint64_t seed, const SwapMatrixFn& build = swap_matrix);

/// Closed-form conditional moments against exhaustive enumeration (n <= 4).
SuiteResult moment_enumeration_suite(std::uint64_t seed);

/// Conditional moments against Monte Carlo sampling at n = 8 (3 standard errors).
SuiteResult monte_carlo_suite(std::uint64_t seed);

std::vector<SuiteResult> run_all(std::uint64_t seed);

}  // namespace tdabias::selftest
