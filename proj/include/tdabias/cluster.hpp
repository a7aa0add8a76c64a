#pragma once

#include <initializer_list>
#include <span>
#include <vector>

#include "tdabias/quantile.hpp"

namespace tdabias {

struct ClusterSummary {
    StepQuantile center;
    double variance = 0.0;
    int size = 0;
    int N = 0;
};

/// Largest cardinality over every quantile function of every cluster given.
/// Pass all clusters that will be compared so they share one N.
int choose_smoothing(std::initializer_list<std::span<const QuantileFunction>> clusters);
int choose_smoothing(std::span<const std::span<const QuantileFunction>> clusters);

/// Step-wise mean, summed in member order.
StepQuantile center(std::span<const StepQuantile> cluster);

/// Mean distance of the members to `center`.
double variance(std::span<const StepQuantile> cluster, const StepQuantile& center);

ClusterSummary summarize(std::span<const StepQuantile> cluster);

/// approximate() over a whole cluster with a shared N.
std::vector<StepQuantile> approximate_all(std::span<const QuantileFunction> cluster, int N);

}  // namespace tdabias
