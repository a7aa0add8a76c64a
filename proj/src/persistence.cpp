#include "tdabias/persistence.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>

namespace tdabias {

UnionFind::UnionFind(std::size_t n) : parent_(n), rank_(n, 0), components_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
}

std::size_t UnionFind::find(std::size_t x) {
    std::size_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
        std::size_t next = parent_[x];
        parent_[x] = root;
        x = next;
    }
    return root;
}

bool UnionFind::unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    --components_;
    return true;
}

PersistenceSets compute_persistence(const WeightedGraph& graph) {
    const int n = graph.node_count();
    const auto weights = graph.weights();

    struct Edge {
        double w;
        std::uint32_t u, v;
    };
    std::vector<Edge> edges;
    edges.reserve(weights.size());
    for (int i = 0, idx = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++idx)
            edges.push_back({weights[static_cast<std::size_t>(idx)], static_cast<std::uint32_t>(i),
                             static_cast<std::uint32_t>(j)});
    // Edges are generated in (i, j) order, so a stable sort keeps that order among ties.
    std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.w > b.w; });

    PersistenceSets out;
    out.births_0d.reserve(static_cast<std::size_t>(n) - 1);
    out.deaths_1d.reserve(edges.size() - (static_cast<std::size_t>(n) - 1));
    UnionFind uf(static_cast<std::size_t>(n));
    for (const Edge& e : edges) {
        if (uf.components() > 1 && uf.unite(e.u, e.v))
            out.births_0d.push_back(e.w);
        else
            out.deaths_1d.push_back(e.w);
    }
    std::reverse(out.births_0d.begin(), out.births_0d.end());
    std::reverse(out.deaths_1d.begin(), out.deaths_1d.end());
    return out;
}

PersistenceSets brute_force_persistence(const WeightedGraph& graph) {
    const int n = graph.node_count();
    if (n > kBruteForceMaxNodes)
        throw std::invalid_argument("brute_force_persistence is limited to small graphs");

    const auto weights = graph.weights();
    std::vector<double> levels(weights.begin(), weights.end());
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

    // Betti numbers of the binary graph keeping edges with weight > eps.
    auto betti = [&](double eps, bool keep_all) {
        UnionFind uf(static_cast<std::size_t>(n));
        long kept = 0;
        for (int i = 0, idx = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j, ++idx)
                if (keep_all || weights[static_cast<std::size_t>(idx)] > eps) {
                    ++kept;
                    uf.unite(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
                }
        const long b0 = static_cast<long>(uf.components());
        return std::pair<long, long>{b0, kept - n + b0};
    };

    PersistenceSets out;
    auto [prev_b0, prev_b1] = betti(0.0, true);
    for (double eps : levels) {
        auto [b0, b1] = betti(eps, false);
        for (long k = 0; k < b0 - prev_b0; ++k) out.births_0d.push_back(eps);
        for (long k = 0; k < prev_b1 - b1; ++k) out.deaths_1d.push_back(eps);
        prev_b0 = b0;
        prev_b1 = b1;
    }
    return out;
}

}  // namespace tdabias
