#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace tdabias {

class EmptyPersistenceSet : public std::invalid_argument {
public:
    EmptyPersistenceSet() : std::invalid_argument("empty persistence set") {}
};

/// Pseudoinverse of the empirical CDF of a value set: takes values[j] on
/// [j/m, (j+1)/m).
class QuantileFunction {
public:
    explicit QuantileFunction(std::vector<double> values);

    std::span<const double> values() const { return values_; }
    std::size_t size() const { return values_.size(); }
    double operator()(double z) const;

private:
    std::vector<double> values_;
};

QuantileFunction build_quantile(std::vector<double> persistence_values);

/// N-step piecewise-constant approximation of a quantile function, step k
/// covering [k/N, (k+1)/N).
class StepQuantile {
public:
    /// Throws std::invalid_argument unless steps is non-empty, finite and
    /// non-decreasing.
    explicit StepQuantile(std::vector<double> steps);

    std::span<const double> steps() const { return steps_; }
    int N() const { return static_cast<int>(steps_.size()); }
    double operator[](std::size_t k) const { return steps_[k]; }

    bool operator==(const StepQuantile&) const = default;

private:
    std::vector<double> steps_;
};

/// Step k is the exact average of F^-1 over [k/N, (k+1)/N), computed from
/// interval overlaps.
StepQuantile approximate(const QuantileFunction& q, int N);

/// Squared 2-Wasserstein distance between two step quantiles of equal N:
/// (1/N) sum_k (a_k - b_k)^2.
double distance(const StepQuantile& a, const StepQuantile& b);

}  // namespace tdabias
