#pragma once

#include <cstddef>
#include <vector>

#include "tdabias/attn_store.hpp"

namespace tdabias {

/// Simplified persistence of a complete weighted graph under the filtration
/// that deletes edges of weight <= eps as eps grows. Components are born
/// (and never die); cycles all exist at -inf and only die.
struct PersistenceSets {
    std::vector<double> births_0d;  // ascending, node_count - 1 values
    std::vector<double> deaths_1d;  // ascending, C(node_count, 2) - node_count + 1 values
};

/// Disjoint-set forest with path compression and union by rank.
class UnionFind {
public:
    explicit UnionFind(std::size_t n);

    std::size_t find(std::size_t x);
    bool unite(std::size_t a, std::size_t b);  // false if already joined
    std::size_t components() const { return components_; }

private:
    std::vector<std::size_t> parent_;
    std::vector<unsigned char> rank_;
    std::size_t components_;
};

/// Births are the maximum-spanning-tree weights, deaths everything else.
/// Equal weights are taken in (i, j) lexicographic order.
PersistenceSets compute_persistence(const WeightedGraph& graph);

inline constexpr int kBruteForceMaxNodes = 12;

/// Direct simulation of the filtration: sweeps eps over the distinct weights
/// and reads births/deaths off the changes in the Betti numbers. Only meant
/// as an oracle; throws std::invalid_argument above kBruteForceMaxNodes.
PersistenceSets brute_force_persistence(const WeightedGraph& graph);

}  // namespace tdabias
