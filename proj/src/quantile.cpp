#include "tdabias/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <fmt/format.h>

namespace tdabias {

QuantileFunction::QuantileFunction(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw EmptyPersistenceSet();
    for (double v : values_)
        if (!std::isfinite(v)) throw std::invalid_argument("persistence values must be finite");
    std::sort(values_.begin(), values_.end());
}

double QuantileFunction::operator()(double z) const {
    const auto m = static_cast<double>(values_.size());
    auto j = static_cast<std::size_t>(std::clamp(std::floor(z * m), 0.0, m - 1.0));
    return values_[j];
}

QuantileFunction build_quantile(std::vector<double> persistence_values) {
    return QuantileFunction(std::move(persistence_values));
}

StepQuantile::StepQuantile(std::vector<double> steps) : steps_(std::move(steps)) {
    if (steps_.empty()) throw std::invalid_argument("step quantile needs at least one step");
    for (std::size_t k = 0; k < steps_.size(); ++k) {
        if (!std::isfinite(steps_[k])) throw std::invalid_argument("step quantile values must be finite");
        if (k > 0 && steps_[k] < steps_[k - 1]) throw std::invalid_argument("step quantile must be non-decreasing");
    }
}

StepQuantile approximate(const QuantileFunction& q, int N) {
    if (N < 1) throw std::invalid_argument("smoothing parameter N must be >= 1");
    const auto values = q.values();
    const auto m = static_cast<std::int64_t>(values.size());
    const auto n = static_cast<std::int64_t>(N);

    // Work on the grid of width 1/(N*m): step k is [k*m, (k+1)*m) and value j
    // is [j*N, (j+1)*N). Each overlap is an integer o and contributes
    // values[j] * o / m to the step average.
    std::vector<double> steps(static_cast<std::size_t>(N));
    for (std::int64_t k = 0; k < n; ++k) {
        const std::int64_t lo = k * m, hi = (k + 1) * m;
        double acc = 0.0;
        for (std::int64_t j = lo / n; j < m && j * n < hi; ++j) {
            const std::int64_t overlap = std::min(hi, (j + 1) * n) - std::max(lo, j * n);
            if (overlap > 0)
                acc += values[static_cast<std::size_t>(j)] * (static_cast<double>(overlap) / static_cast<double>(m));
        }
        steps[static_cast<std::size_t>(k)] = acc;
    }
    // Rounding in the weighted sums can break monotonicity by an ulp.
    for (std::size_t k = 1; k < steps.size(); ++k) steps[k] = std::max(steps[k], steps[k - 1]);
    return StepQuantile(std::move(steps));
}

double distance(const StepQuantile& a, const StepQuantile& b) {
    if (a.N() != b.N())
        throw std::invalid_argument(fmt::format("step quantiles differ in N ({} vs {})", a.N(), b.N()));
    double acc = 0.0;
    for (std::size_t k = 0; k < a.steps().size(); ++k) {
        const double d = a[k] - b[k];
        acc += d * d;
    }
    return acc / static_cast<double>(a.N());
}

}  // namespace tdabias
