#include "tdabias/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/format.h>

namespace tdabias {

namespace {

bool wanted(const std::vector<std::string>& filter, std::string_view value) {
    return filter.empty() || std::find(filter.begin(), filter.end(), value) != filter.end();
}

std::vector<QuantileFunction> quantiles(std::span<const PersistenceSets> sets, int dim) {
    std::vector<QuantileFunction> out;
    out.reserve(sets.size());
    for (const auto& s : sets) {
        const auto& values = dim == 0 ? s.births_0d : s.deaths_1d;
        if (values.empty())
            throw DegenerateCluster(SkipReason::empty_persistence_set,
                                    fmt::format("a graph has no {}-dimensional features", dim));
        out.push_back(build_quantile(values));
    }
    return out;
}

std::vector<PersistenceSets> persistence_of(const std::vector<WeightedGraph>& graphs) {
    std::vector<PersistenceSets> out;
    out.reserve(graphs.size());
    for (const auto& g : graphs) out.push_back(compute_persistence(g));
    return out;
}

}  // namespace

void validate(const AnalysisConfig& config) {
    if (config.dims.empty()) throw std::invalid_argument("at least one dimension is required");
    for (int d : config.dims)
        if (d != 0 && d != 1) throw std::invalid_argument(fmt::format("unknown dimension {}", d));
    if (config.min_cluster_size < 2) throw std::invalid_argument("min_cluster_size must be >= 2");
    if (config.workers < 1) throw std::invalid_argument("workers must be >= 1");
    for (const auto& c : config.categories)
        if (!parse_category(c)) throw std::invalid_argument(fmt::format("unknown category '{}'", c));
}

std::vector<ExampleTriple> select_triples(const Manifest& manifest, const AnalysisConfig& config) {
    std::vector<ExampleTriple> out;
    for (const auto& t : manifest.triples)
        if (wanted(config.categories, to_string(t.category)) && wanted(config.groups, t.group)) out.push_back(t);
    return out;
}

DimensionResult analyze_dimension(std::span<const PersistenceSets> stereotype,
                                  std::span<const PersistenceSets> anti_stereotype,
                                  std::span<const PersistenceSets> irrelevant, int dim) {
    const auto qs = quantiles(stereotype, dim);
    const auto qa = quantiles(anti_stereotype, dim);
    const auto qi = quantiles(irrelevant, dim);
    const int N = choose_smoothing({qs, qa, qi});
    TripleCluster triple(approximate_all(qs, N), approximate_all(qa, N), approximate_all(qi, N));
    return evaluate_dimension(triple);
}

BiasRow analyze_cluster(const ClusterKey& key, const ClusterGraphs& graphs, const AnalysisConfig& config) {
    BiasRow row;
    row.key = key;
    row.n = static_cast<int>(graphs.size());
    if (graphs.skipped || row.n < config.min_cluster_size) {
        row.skipped = true;
        row.reason = std::string(to_string(SkipReason::undersized));
        return row;
    }

    const auto ps = persistence_of(graphs.stereotype);
    const auto pa = persistence_of(graphs.anti_stereotype);
    const auto pi = persistence_of(graphs.irrelevant);

    std::vector<std::string> reasons;
    for (int dim : {0, 1}) {
        if (std::find(config.dims.begin(), config.dims.end(), dim) == config.dims.end()) continue;
        try {
            row.dims[static_cast<std::size_t>(dim)] = analyze_dimension(ps, pa, pi, dim);
        } catch (const DegenerateCluster& e) {
            reasons.push_back(fmt::format("dim{}:{}", dim, to_string(e.reason())));
        }
    }
    if (row.dims[0] && row.dims[1]) row.combined = combined_metric(*row.dims[0], *row.dims[1], config.combine_mode);
    if (!reasons.empty()) {
        row.skipped = true;
        row.reason = fmt::format("{}", fmt::join(reasons, ";"));
    }
    return row;
}

std::vector<BiasRow> analyze(const AttentionStore& store, const AnalysisConfig& config) {
    validate(config);
    const auto& manifest = store.manifest();
    const auto triples = select_triples(manifest, config);

    const int items = manifest.layer_count * manifest.head_count;
    std::atomic<int> next{0};
    std::mutex mutex;
    std::vector<BiasRow> rows;
    std::exception_ptr failure;

    auto worker = [&] {
        std::vector<BiasRow> local;
        try {
            for (int item = next++; item < items; item = next++) {
                const int layer = item / manifest.head_count;
                const int head = item % manifest.head_count;
                for (const auto& [key, graphs] :
                     build_clusters(store, triples, layer, head, config.min_cluster_size))
                    local.push_back(analyze_cluster(key, graphs, config));
            }
        } catch (...) {
            std::lock_guard lock(mutex);
            if (!failure) failure = std::current_exception();
            next = items;
        }
        std::lock_guard lock(mutex);
        for (auto& r : local) rows.push_back(std::move(r));
    };

    const int threads = std::max(1, std::min(config.workers, items));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    std::sort(rows.begin(), rows.end(), [](const BiasRow& a, const BiasRow& b) { return a.key < b.key; });
    return rows;
}

RunInfo make_run_info(const AttentionStore& store, const AnalysisConfig& config, const std::vector<BiasRow>& rows,
                      bool strict_rows) {
    const auto& m = store.manifest();
    RunInfo info;
    info.model = m.model;
    info.fingerprint = store.fingerprint();
    info.layer_count = m.layer_count;
    info.head_count = m.head_count;
    info.dims = config.dims;
    std::sort(info.dims.begin(), info.dims.end());
    info.combine_mode = config.combine_mode;
    info.min_cluster_size = config.min_cluster_size;
    info.strict_rows = strict_rows;
    info.category_filter = config.categories;
    info.group_filter = config.groups;
    info.complete_triples = select_triples(m, config).size();
    info.incomplete_examples = m.incomplete_examples.size();
    info.row_sum_warnings = store.row_sum_warnings();
    tally_rows(rows, info);
    return info;
}

}  // namespace tdabias
