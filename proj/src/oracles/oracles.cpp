#include "tdabias/oracles.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/multiprecision/cpp_int.hpp>

namespace tdabias::oracles {

namespace {

std::vector<double> mean_steps(const std::vector<StepQuantile>& members) {
    std::vector<double> c(members.front().steps().size(), 0.0);
    for (const auto& m : members)
        for (std::size_t k = 0; k < c.size(); ++k) c[k] += m[k];
    for (double& v : c) v /= static_cast<double>(members.size());
    return c;
}

double spread(const std::vector<StepQuantile>& members) {
    const auto c = mean_steps(members);
    double total = 0.0;
    for (const auto& m : members) {
        double d = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k) d += (m[k] - c[k]) * (m[k] - c[k]);
        total += d / static_cast<double>(c.size());
    }
    return total / static_cast<double>(members.size());
}

// Uniform partial matching of size t: the first t entries of independently
// shuffled row and column orders are paired up.
template <typename Fn>
void sample_matching(int n, int t, std::mt19937_64& rng, std::vector<int>& rows, std::vector<int>& cols, Fn&& fn) {
    rows.resize(static_cast<std::size_t>(n));
    cols.resize(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    std::iota(cols.begin(), cols.end(), 0);
    for (int k = 0; k < t; ++k) {
        std::uniform_int_distribution<int> pick_r(k, n - 1), pick_c(k, n - 1);
        std::swap(rows[static_cast<std::size_t>(k)], rows[static_cast<std::size_t>(pick_r(rng))]);
        std::swap(cols[static_cast<std::size_t>(k)], cols[static_cast<std::size_t>(pick_c(rng))]);
    }
    for (int k = 0; k < t; ++k) fn(rows[static_cast<std::size_t>(k)], cols[static_cast<std::size_t>(k)]);
}

std::discrete_distribution<int> length_sampler(int n) {
    const auto p = exact_swap_length_distribution(n);
    return std::discrete_distribution<int>(p.begin(), p.end());  // yields t - 1
}

}  // namespace

double statistic_from_scratch(const std::vector<StepQuantile>& stereotype,
                              const std::vector<StepQuantile>& anti_stereotype,
                              const std::vector<StepQuantile>& irrelevant) {
    return (spread(anti_stereotype) - spread(stereotype)) / spread(irrelevant);
}

double swap_delta_by_recompute(const TripleCluster& triple, int i, int j) {
    auto s = triple.stereotype();
    auto a = triple.anti_stereotype();
    const double before = statistic_from_scratch(s, a, triple.irrelevant());
    std::swap(s[static_cast<std::size_t>(i)], a[static_cast<std::size_t>(j)]);
    return statistic_from_scratch(s, a, triple.irrelevant()) - before;
}

EnumeratedMoments enumerate_swap_moments(const SwapMatrix& a, int t) {
    const int n = a.n();
    if (n > 8) throw std::invalid_argument("enumeration is limited to n <= 8");
    if (t < 1 || t > n) throw std::invalid_argument("swap length out of range");

    std::vector<std::vector<int>> subsets;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (std::popcount(mask) != t) continue;
        std::vector<int> s;
        for (int b = 0; b < n; ++b)
            if (mask & (1u << b)) s.push_back(b);
        subsets.push_back(std::move(s));
    }

    std::vector<double> sums;
    for (const auto& rows : subsets)
        for (auto cols : subsets) {
            do {
                double w = 0.0;
                for (int k = 0; k < t; ++k) w += a(rows[static_cast<std::size_t>(k)], cols[static_cast<std::size_t>(k)]);
                sums.push_back(w);
            } while (std::next_permutation(cols.begin(), cols.end()));
        }

    EnumeratedMoments m;
    m.swap_sets = sums.size();
    for (double w : sums) m.mean += w;
    m.mean /= static_cast<double>(sums.size());
    for (double w : sums) m.variance += (w - m.mean) * (w - m.mean);
    m.variance /= static_cast<double>(sums.size());
    return m;
}

double sample_swap_sum(const SwapMatrix& a, int t, std::mt19937_64& rng) {
    std::vector<int> rows, cols;
    double w = 0.0;
    sample_matching(a.n(), t, rng, rows, cols, [&](int r, int c) { w += a(r, c); });
    return w;
}

SampledMoments sample_swap_moments(const SwapMatrix& a, int t, std::size_t samples, std::mt19937_64& rng) {
    std::vector<double> w(samples);
    for (auto& x : w) x = sample_swap_sum(a, t, rng);
    SampledMoments m;
    m.samples = samples;
    const auto count = static_cast<double>(samples);
    for (double x : w) m.mean += x;
    m.mean /= count;
    double m2 = 0.0, m4 = 0.0;
    for (double x : w) {
        const double d = (x - m.mean) * (x - m.mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= count;
    m4 /= count;
    m.variance = m2;
    m.mean_se = std::sqrt(m2 / count);
    m.variance_se = std::sqrt(std::max(0.0, m4 - m2 * m2) / count);
    return m;
}

SampledProbability sample_prob_positive(const SwapMatrix& a, std::size_t samples, std::mt19937_64& rng) {
    auto lengths = length_sampler(a.n());
    double hits = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const double w = sample_swap_sum(a, lengths(rng) + 1, rng);
        hits += w > 0.0 ? 1.0 : (w == 0.0 ? 0.5 : 0.0);
    }
    SampledProbability p;
    p.estimate = hits / static_cast<double>(samples);
    p.standard_error = std::sqrt(p.estimate * (1.0 - p.estimate) / static_cast<double>(samples));
    return p;
}

SampledProbability sample_permutation_p_value(const TripleCluster& triple, std::size_t samples,
                                              std::mt19937_64& rng) {
    const int n = triple.n();
    auto lengths = length_sampler(n);
    const double observed =
        statistic_from_scratch(triple.stereotype(), triple.anti_stereotype(), triple.irrelevant());
    std::vector<int> rows, cols;
    double hits = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        auto st = triple.stereotype();
        auto an = triple.anti_stereotype();
        sample_matching(n, lengths(rng) + 1, rng, rows, cols, [&](int r, int c) {
            std::swap(st[static_cast<std::size_t>(r)], an[static_cast<std::size_t>(c)]);
        });
        const double w = statistic_from_scratch(st, an, triple.irrelevant()) - observed;
        hits += w > 0.0 ? 1.0 : (w == 0.0 ? 0.5 : 0.0);
    }
    SampledProbability p;
    const double prob = hits / static_cast<double>(samples);
    p.estimate = observed >= 0.0 ? prob : 1.0 - prob;
    p.standard_error = std::sqrt(prob * (1.0 - prob) / static_cast<double>(samples));
    return p;
}

std::vector<double> exact_swap_length_distribution(int n) {
    using boost::multiprecision::cpp_int;
    using boost::multiprecision::cpp_rational;
    std::vector<cpp_int> counts;
    cpp_int total = 0;
    for (int t = 1; t <= n; ++t) {
        cpp_int binom = 1, fact = 1;
        for (int k = 1; k <= t; ++k) {
            binom = binom * (n - k + 1) / k;
            fact *= k;
        }
        counts.push_back(binom * binom * fact);
        total += counts.back();
    }
    std::vector<double> p;
    for (const auto& c : counts) p.push_back(cpp_rational(c, total).convert_to<double>());
    return p;
}

WeightedGraph random_graph(int nodes, std::mt19937_64& rng, double tie_fraction) {
    const auto edges = static_cast<std::size_t>(nodes) * static_cast<std::size_t>(nodes - 1) / 2;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> w(edges);
    for (std::size_t e = 0; e < edges; ++e) {
        if (e > 0 && unit(rng) < tie_fraction)
            w[e] = w[std::uniform_int_distribution<std::size_t>(0, e - 1)(rng)];
        else
            w[e] = unit(rng);
    }
    return WeightedGraph(nodes, std::move(w));
}

StepQuantile random_step_quantile(int N, std::mt19937_64& rng, double scale) {
    std::uniform_real_distribution<double> unit(0.0, scale);
    std::vector<double> s(static_cast<std::size_t>(N));
    for (auto& x : s) x = unit(rng);
    std::sort(s.begin(), s.end());
    return StepQuantile(std::move(s));
}

TripleCluster random_triple(int n, int N, std::mt19937_64& rng) {
    std::normal_distribution<double> noise(0.0, 1.0);
    const StepQuantile base = random_step_quantile(N, rng);
    std::uniform_real_distribution<double> spread_pick(0.05, 0.5);
    auto cluster = [&](double sd) {
        std::vector<StepQuantile> out;
        for (int i = 0; i < n; ++i) {
            std::vector<double> s(base.steps().begin(), base.steps().end());
            for (auto& x : s) x += sd * noise(rng);
            std::sort(s.begin(), s.end());
            out.emplace_back(std::move(s));
        }
        return out;
    };
    auto s = cluster(spread_pick(rng));
    auto a = cluster(spread_pick(rng));
    auto i = cluster(spread_pick(rng) + 0.25);
    return TripleCluster(std::move(s), std::move(a), std::move(i));
}

SwapMatrix random_swap_matrix(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> e(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (auto& x : e) x = unit(rng);
    return SwapMatrix(n, std::move(e));
}

}  // namespace tdabias::oracles
