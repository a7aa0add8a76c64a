#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tdabias/attn_store.hpp"
#include "tdabias/cluster.hpp"
#include "tdabias/quantile.hpp"

namespace tdabias {

enum class SkipReason { undersized, degenerate_irrelevant, empty_persistence_set };

std::string_view to_string(SkipReason r);

/// A cluster triple that cannot produce a statistic. Callers turn this into a
/// skipped row rather than aborting the run.
class DegenerateCluster : public std::runtime_error {
public:
    DegenerateCluster(SkipReason reason, const std::string& what) : std::runtime_error(what), reason_(reason) {}
    SkipReason reason() const { return reason_; }

private:
    SkipReason reason_;
};

/// Stereotype / anti-stereotype / irrelevant members of one key and one
/// dimension. Lists are index-aligned by context and share one N.
class TripleCluster {
public:
    TripleCluster(std::vector<StepQuantile> stereotype, std::vector<StepQuantile> anti_stereotype,
                  std::vector<StepQuantile> irrelevant);

    int n() const { return static_cast<int>(stereotype_.size()); }
    int N() const { return stereotype_summary_.N; }

    const std::vector<StepQuantile>& stereotype() const { return stereotype_; }
    const std::vector<StepQuantile>& anti_stereotype() const { return anti_; }
    const std::vector<StepQuantile>& irrelevant() const { return irrelevant_; }
    const ClusterSummary& stereotype_summary() const { return stereotype_summary_; }
    const ClusterSummary& anti_summary() const { return anti_summary_; }
    const ClusterSummary& irrelevant_summary() const { return irrelevant_summary_; }

private:
    std::vector<StepQuantile> stereotype_, anti_, irrelevant_;
    ClusterSummary stereotype_summary_, anti_summary_, irrelevant_summary_;
};

struct BiasStatistic {
    double value = 0.0;  // (var_anti - var_stereotype) / var_irrelevant
    double var_stereotype = 0.0;
    double var_anti = 0.0;
    double var_irrelevant = 0.0;
};

/// Throws DegenerateCluster when n < 2 or the irrelevant variance is zero.
BiasStatistic bias_statistic(const TripleCluster& triple);

/// entries(i, j) is the exact change of the statistic when stereotype i is
/// exchanged with anti-stereotype j.
class SwapMatrix {
public:
    SwapMatrix(int n, std::vector<double> entries);

    int n() const { return n_; }
    double operator()(int i, int j) const { return entries_[static_cast<std::size_t>(i) * n_ + j]; }
    std::span<const double> entries() const { return entries_; }

private:
    int n_;
    std::vector<double> entries_;
};

SwapMatrix swap_matrix(const TripleCluster& triple);

/// P(t) for swap lengths t = 1..n (element t-1), proportional to
/// C(n,t)^2 t!. Exact ratios of integers while the counts fit a double's
/// mantissa, log-space beyond that.
std::vector<double> swap_length_distribution(int n);

/// Always the log-space route; exposed for testing against exact arithmetic.
std::vector<double> swap_length_distribution_log(int n);

struct ConditionalMoments {
    double mean = 0.0;      // mu_t
    double variance = 0.0;  // sigma_t^2
    bool clamped = false;   // rounding pushed the variance below zero
};

/// Moments of W_t = sum of t swap-matrix entries drawn from a uniformly random
/// partial matching of size t between stereotypes and anti-stereotypes.
class SwapMoments {
public:
    explicit SwapMoments(const SwapMatrix& a);

    int n() const { return n_; }
    double mean_entry() const { return mean_; }
    double entry_variance() const { return var_; }
    ConditionalMoments at(int t) const;

private:
    int n_;
    double mean_;
    double var_;
    // (sum B)^2 - sum_s row_s(B)^2 - sum_t col_t(B)^2 + sum B^2 on the
    // centered matrix B = A - mean.
    double pair_term_;
};

ConditionalMoments conditional_moments(const SwapMatrix& a, int t);

/// Standard normal CDF.
double normal_cdf(double x);

struct LengthTerm {
    double probability = 0.0;
    double mean = 0.0;
    double variance = 0.0;
};

struct PermutationResult {
    double prob_positive = 0.0;  // P(W > 0)
    double p_value = 0.0;
    std::vector<LengthTerm> per_t;  // element t-1
    int clamped = 0;
};

/// Normal approximation of P(W > 0) mixed over swap lengths; p_value is left
/// at zero (see p_value()).
PermutationResult prob_positive(const SwapMatrix& a);

/// One-sided p-value: the chance a random permutation moves the statistic
/// further in the direction it already points.
double p_value(double statistic, double prob_positive);

double bias_metric(double statistic, double p);

enum class CombineMode { metric, statistic };

std::string_view to_string(CombineMode m);
std::optional<CombineMode> parse_combine_mode(std::string_view s);

struct DimensionResult {
    int N = 0;
    BiasStatistic statistic;
    double p = 1.0;
    double metric = 0.0;  // (1 - p) * S
    int clamped = 0;
};

/// Full test for one dimension: statistic, swap matrix, permutation p-value, metric.
DimensionResult evaluate_dimension(const TripleCluster& triple);

double combined_metric(const DimensionResult& dim0, const DimensionResult& dim1, CombineMode mode);

struct BiasRow {
    ClusterKey key;
    int n = 0;
    std::array<std::optional<DimensionResult>, 2> dims;
    std::optional<double> combined;
    bool skipped = false;
    std::string reason;  // empty unless skipped; "dim<k>:<reason>" entries joined by ';'
};

}  // namespace tdabias
