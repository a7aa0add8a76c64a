#pragma once

#include <string>
#include <vector>

#include "tdabias/attn_store.hpp"
#include "tdabias/bias_stat.hpp"
#include "tdabias/persistence.hpp"
#include "tdabias/report.hpp"

namespace tdabias {

struct AnalysisConfig {
    std::vector<int> dims{0, 1};
    CombineMode combine_mode = CombineMode::metric;
    int min_cluster_size = kDefaultMinClusterSize;
    std::vector<std::string> categories;  // empty = all
    std::vector<std::string> groups;      // empty = all
    int workers = 1;
};

/// Throws std::invalid_argument for unusable settings (empty or unknown dims,
/// min_cluster_size < 2, workers < 1, unknown category names).
void validate(const AnalysisConfig& config);

std::vector<ExampleTriple> select_triples(const Manifest& manifest, const AnalysisConfig& config);

/// Persistence -> step quantiles (shared N) -> statistic and permutation
/// test for one dimension. Throws DegenerateCluster for unusable inputs.
DimensionResult analyze_dimension(std::span<const PersistenceSets> stereotype,
                                  std::span<const PersistenceSets> anti_stereotype,
                                  std::span<const PersistenceSets> irrelevant, int dim);

BiasRow analyze_cluster(const ClusterKey& key, const ClusterGraphs& graphs, const AnalysisConfig& config);

/// All keys of the (filtered) dump, sorted by key. Work is split over
/// (layer, head) pairs; the result does not depend on config.workers.
std::vector<BiasRow> analyze(const AttentionStore& store, const AnalysisConfig& config);

RunInfo make_run_info(const AttentionStore& store, const AnalysisConfig& config, const std::vector<BiasRow>& rows,
                      bool strict_rows);

}  // namespace tdabias
