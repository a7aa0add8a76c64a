#include "tdabias/bias_stat.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

#include <fmt/format.h>

namespace tdabias {

std::string_view to_string(SkipReason r) {
    switch (r) {
        case SkipReason::undersized: return "undersized";
        case SkipReason::degenerate_irrelevant: return "degenerate_irrelevant";
        case SkipReason::empty_persistence_set: return "empty_persistence_set";
    }
    return "?";
}

std::string_view to_string(CombineMode m) { return m == CombineMode::metric ? "metric" : "statistic"; }

std::optional<CombineMode> parse_combine_mode(std::string_view s) {
    if (s == "metric") return CombineMode::metric;
    if (s == "statistic") return CombineMode::statistic;
    return std::nullopt;
}

TripleCluster::TripleCluster(std::vector<StepQuantile> stereotype, std::vector<StepQuantile> anti_stereotype,
                             std::vector<StepQuantile> irrelevant)
    : stereotype_(std::move(stereotype)), anti_(std::move(anti_stereotype)), irrelevant_(std::move(irrelevant)),
      stereotype_summary_(summarize(stereotype_)), anti_summary_(summarize(anti_)),
      irrelevant_summary_(summarize(irrelevant_)) {
    if (anti_.size() != stereotype_.size() || irrelevant_.size() != stereotype_.size())
        throw std::invalid_argument("triple clusters must have equal sizes");
    if (anti_summary_.N != stereotype_summary_.N || irrelevant_summary_.N != stereotype_summary_.N)
        throw std::invalid_argument("triple clusters must share one smoothing parameter");
}

BiasStatistic bias_statistic(const TripleCluster& triple) {
    if (triple.n() < 2)
        throw DegenerateCluster(SkipReason::undersized, fmt::format("cluster of size {} is too small", triple.n()));
    BiasStatistic s;
    s.var_stereotype = triple.stereotype_summary().variance;
    s.var_anti = triple.anti_summary().variance;
    s.var_irrelevant = triple.irrelevant_summary().variance;
    if (!(s.var_irrelevant > 0.0))
        throw DegenerateCluster(SkipReason::degenerate_irrelevant, "irrelevant cluster has zero variance");
    s.value = (s.var_anti - s.var_stereotype) / s.var_irrelevant;
    return s;
}

SwapMatrix::SwapMatrix(int n, std::vector<double> entries) : n_(n), entries_(std::move(entries)) {
    if (n < 1 || entries_.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
        throw std::invalid_argument("swap matrix must be n x n with n >= 1");
}

SwapMatrix swap_matrix(const TripleCluster& triple) {
    const BiasStatistic stat = bias_statistic(triple);
    const int n = triple.n();
    const auto& c_s = triple.stereotype_summary().center;
    const auto& c_a = triple.anti_summary().center;

    // Swapping x_i out of the stereotypes and y_j out of the anti-stereotypes
    // changes the statistic by (u_i - v_j) / (n var_I), with
    // u_i = d(x_i, c_A) + d(x_i, c_S) and v_j = d(y_j, c_A) + d(y_j, c_S).
    std::vector<double> u(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& x = triple.stereotype()[static_cast<std::size_t>(i)];
        const auto& y = triple.anti_stereotype()[static_cast<std::size_t>(i)];
        u[static_cast<std::size_t>(i)] = distance(x, c_a) + distance(x, c_s);
        v[static_cast<std::size_t>(i)] = distance(y, c_a) + distance(y, c_s);
    }
    const double scale = 1.0 / (static_cast<double>(n) * stat.var_irrelevant);
    std::vector<double> entries(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            entries[static_cast<std::size_t>(i) * n + j] =
                scale * (u[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)]);
    return SwapMatrix(n, std::move(entries));
}

namespace {

// N_t = C(n,t)^2 t! for t = 1..n as exact integers; nullopt once any N_t or
// the total would exceed 2^53.
std::optional<std::vector<std::uint64_t>> exact_swap_counts(int n) {
    constexpr std::uint64_t kMantissaLimit = std::uint64_t{1} << 53;
    std::vector<std::uint64_t> counts;
    std::uint64_t binom = 1;  // C(n, t)
    std::uint64_t fact = 1;   // t!
    std::uint64_t total = 0;
    if (static_cast<std::uint64_t>(n) > (std::uint64_t{1} << 26)) return std::nullopt;
    for (int t = 1; t <= n; ++t) {
        // C(n,t) = C(n,t-1) * (n-t+1) / t is exact at every step. binom stays
        // below 2^27 here (else binom^2 alone would have exceeded the limit),
        // so the product cannot overflow.
        binom = binom * static_cast<std::uint64_t>(n - t + 1) / static_cast<std::uint64_t>(t);
        fact *= static_cast<std::uint64_t>(t);
        if (fact > kMantissaLimit || binom > kMantissaLimit / binom || binom * binom > kMantissaLimit / fact)
            return std::nullopt;
        const std::uint64_t count = binom * binom * fact;
        total += count;
        if (total > kMantissaLimit) return std::nullopt;
        counts.push_back(count);
    }
    return counts;
}

}  // namespace

std::vector<double> swap_length_distribution_log(int n) {
    if (n < 1) throw std::invalid_argument("swap length distribution needs n >= 1");
    // log N_1 = 2 log n; N_{t+1} / N_t = (n - t)^2 / (t + 1).
    std::vector<double> logs(static_cast<std::size_t>(n));
    logs[0] = 2.0 * std::log(static_cast<double>(n));
    for (int t = 1; t < n; ++t)
        logs[static_cast<std::size_t>(t)] =
            logs[static_cast<std::size_t>(t - 1)] + 2.0 * std::log(static_cast<double>(n - t)) -
            std::log(static_cast<double>(t + 1));

    double peak = -std::numeric_limits<double>::infinity();
    for (double l : logs) peak = std::max(peak, l);
    std::vector<double> p(logs.size());
    double total = 0.0;
    for (std::size_t t = 0; t < logs.size(); ++t) total += (p[t] = std::exp(logs[t] - peak));
    for (double& x : p) x /= total;
    return p;
}

std::vector<double> swap_length_distribution(int n) {
    if (n < 1) throw std::invalid_argument("swap length distribution needs n >= 1");
    if (auto counts = exact_swap_counts(n)) {
        double total = 0.0;
        for (auto c : *counts) total += static_cast<double>(c);
        std::vector<double> p;
        p.reserve(counts->size());
        for (auto c : *counts) p.push_back(static_cast<double>(c) / total);
        return p;
    }
    return swap_length_distribution_log(n);
}

SwapMoments::SwapMoments(const SwapMatrix& a) : n_(a.n()) {
    const auto n = static_cast<std::size_t>(n_);
    const double cells = static_cast<double>(n * n);
    double sum = 0.0;
    for (double x : a.entries()) sum += x;
    mean_ = sum / cells;

    // The variance formula is shift invariant; evaluating it on the centered
    // matrix avoids cancelling against (t * mean)^2.
    double total = 0.0, squares = 0.0, rows = 0.0;
    std::vector<double> cols(n, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        double row = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double b = a(static_cast<int>(s), static_cast<int>(t)) - mean_;
            row += b;
            cols[t] += b;
            squares += b * b;
        }
        total += row;
        rows += row * row;
    }
    double col_squares = 0.0;
    for (double c : cols) col_squares += c * c;
    var_ = squares / cells;
    pair_term_ = total * total - rows - col_squares + squares;
}

ConditionalMoments SwapMoments::at(int t) const {
    if (t < 1 || t > n_) throw std::invalid_argument(fmt::format("swap length {} outside [1, {}]", t, n_));
    ConditionalMoments m;
    const double td = static_cast<double>(t);
    m.mean = td * mean_;
    double var = td * var_;
    if (t > 1) {
        const double n = static_cast<double>(n_);
        var += (td * td - td) / (n * n * (n - 1.0) * (n - 1.0)) * pair_term_;
    }
    if (var < 0.0) {
        var = 0.0;
        m.clamped = true;
    }
    m.variance = var;
    return m;
}

ConditionalMoments conditional_moments(const SwapMatrix& a, int t) { return SwapMoments(a).at(t); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

PermutationResult prob_positive(const SwapMatrix& a) {
    const SwapMoments moments(a);
    const auto lengths = swap_length_distribution(a.n());
    PermutationResult r;
    r.per_t.reserve(lengths.size());
    double prob = 0.0;
    for (int t = 1; t <= a.n(); ++t) {
        const auto m = moments.at(t);
        if (m.clamped) ++r.clamped;
        double term;
        if (m.variance > 0.0)
            term = normal_cdf(m.mean / std::sqrt(m.variance));
        else
            term = m.mean > 0.0 ? 1.0 : (m.mean < 0.0 ? 0.0 : 0.5);
        const double pt = lengths[static_cast<std::size_t>(t - 1)];
        prob += term * pt;
        r.per_t.push_back({pt, m.mean, m.variance});
    }
    r.prob_positive = std::clamp(prob, 0.0, 1.0);
    return r;
}

double p_value(double statistic, double prob) {
    if (!(prob >= 0.0 && prob <= 1.0)) throw std::invalid_argument("probability outside [0, 1]");
    return statistic >= 0.0 ? prob : 1.0 - prob;
}

double bias_metric(double statistic, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p-value outside [0, 1]");
    return (1.0 - p) * statistic;
}

DimensionResult evaluate_dimension(const TripleCluster& triple) {
    DimensionResult d;
    d.N = triple.N();
    d.statistic = bias_statistic(triple);
    auto perm = prob_positive(swap_matrix(triple));
    d.p = p_value(d.statistic.value, perm.prob_positive);
    d.metric = bias_metric(d.statistic.value, d.p);
    d.clamped = perm.clamped;
    return d;
}

double combined_metric(const DimensionResult& dim0, const DimensionResult& dim1, CombineMode mode) {
    if (mode == CombineMode::metric) return (dim0.metric + dim1.metric) / 2.0;
    return (dim0.statistic.value + dim1.statistic.value) / 2.0;
}

}  // namespace tdabias
