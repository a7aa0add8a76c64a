#include "tdabias/cluster.hpp"

#include <algorithm>
#include <stdexcept>

namespace tdabias {

namespace {

void check_cluster(std::span<const StepQuantile> cluster) {
    if (cluster.empty()) throw std::invalid_argument("empty cluster");
    const int N = cluster.front().N();
    for (const auto& m : cluster)
        if (m.N() != N) throw std::invalid_argument("cluster members differ in N");
}

}  // namespace

int choose_smoothing(std::span<const std::span<const QuantileFunction>> clusters) {
    std::size_t best = 0;
    for (auto cl : clusters)
        for (const auto& q : cl) best = std::max(best, q.size());
    if (best == 0) throw std::invalid_argument("choose_smoothing needs at least one quantile function");
    return static_cast<int>(best);
}

int choose_smoothing(std::initializer_list<std::span<const QuantileFunction>> clusters) {
    return choose_smoothing(std::span<const std::span<const QuantileFunction>>(clusters.begin(), clusters.size()));
}

StepQuantile center(std::span<const StepQuantile> cluster) {
    check_cluster(cluster);
    std::vector<double> acc(static_cast<std::size_t>(cluster.front().N()), 0.0);
    for (const auto& m : cluster)
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += m[k];
    const auto size = static_cast<double>(cluster.size());
    for (double& v : acc) v /= size;
    return StepQuantile(std::move(acc));
}

double variance(std::span<const StepQuantile> cluster, const StepQuantile& c) {
    check_cluster(cluster);
    if (c.N() != cluster.front().N()) throw std::invalid_argument("center and cluster differ in N");
    double acc = 0.0;
    for (const auto& m : cluster) acc += distance(m, c);
    return acc / static_cast<double>(cluster.size());
}

ClusterSummary summarize(std::span<const StepQuantile> cluster) {
    StepQuantile c = center(cluster);
    const double v = variance(cluster, c);
    const int N = c.N();
    return ClusterSummary{std::move(c), v, static_cast<int>(cluster.size()), N};
}

std::vector<StepQuantile> approximate_all(std::span<const QuantileFunction> cluster, int N) {
    std::vector<StepQuantile> out;
    out.reserve(cluster.size());
    for (const auto& q : cluster) out.push_back(approximate(q, N));
    return out;
}

}  // namespace tdabias
