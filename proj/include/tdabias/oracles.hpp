#pragma once

// Reference computations that check the analysis path by independent routes:
// full recomputation, exhaustive enumeration and Monte Carlo sampling. None of
// these reuse the incremental or closed-form code they are compared against.

#include <cstddef>
#include <random>
#include <vector>

#include "tdabias/attn_store.hpp"
#include "tdabias/bias_stat.hpp"
#include "tdabias/quantile.hpp"

namespace tdabias::oracles {

/// Statistic computed directly from member lists: centers and variances
/// rebuilt term by term.
double statistic_from_scratch(const std::vector<StepQuantile>& stereotype,
                              const std::vector<StepQuantile>& anti_stereotype,
                              const std::vector<StepQuantile>& irrelevant);

/// S' - S after exchanging stereotype i with anti-stereotype j, by recomputation.
double swap_delta_by_recompute(const TripleCluster& triple, int i, int j);

struct EnumeratedMoments {
    double mean = 0.0;
    double variance = 0.0;
    std::size_t swap_sets = 0;
};

/// Mean and variance of the sum of swap-matrix entries over every ordered
/// swap set of length t (t rows, t columns and a bijection between them).
EnumeratedMoments enumerate_swap_moments(const SwapMatrix& a, int t);

struct SampledMoments {
    double mean = 0.0;
    double variance = 0.0;
    double mean_se = 0.0;      // standard error of `mean`
    double variance_se = 0.0;  // standard error of `variance`
    std::size_t samples = 0;
};

/// Sum of entries over one uniformly random partial matching of size t.
double sample_swap_sum(const SwapMatrix& a, int t, std::mt19937_64& rng);

SampledMoments sample_swap_moments(const SwapMatrix& a, int t, std::size_t samples, std::mt19937_64& rng);

struct SampledProbability {
    double estimate = 0.0;
    double standard_error = 0.0;
};

/// Monte Carlo P(W > 0): t drawn with probability proportional to
/// C(n,t)^2 t!, then a uniform partial matching of that size.
SampledProbability sample_prob_positive(const SwapMatrix& a, std::size_t samples, std::mt19937_64& rng);

/// Monte Carlo permutation p-value with the statistic recomputed after
/// actually exchanging the sampled members (no additivity assumption).
SampledProbability sample_permutation_p_value(const TripleCluster& triple, std::size_t samples,
                                              std::mt19937_64& rng);

/// Exact P(t) by rational arithmetic, rounded to double at the end.
std::vector<double> exact_swap_length_distribution(int n);

// Random inputs for property checks.

/// Complete graph with weights in [0, 1); with tie_fraction > 0 that share of
/// edges copies the weight of an earlier edge.
WeightedGraph random_graph(int nodes, std::mt19937_64& rng, double tie_fraction = 0.0);

StepQuantile random_step_quantile(int N, std::mt19937_64& rng, double scale = 1.0);

/// Triple with members spread by different amounts so the statistic is not
/// trivially zero.
TripleCluster random_triple(int n, int N, std::mt19937_64& rng);

SwapMatrix random_swap_matrix(int n, std::mt19937_64& rng);

}  // namespace tdabias::oracles
