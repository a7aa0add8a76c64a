#pragma once

#include <array>
#include <atomic>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tdabias {

/// Raised for anything wrong with an attention dump: malformed manifest,
/// inconsistent records, unreadable or corrupt blobs. The message always
/// names the offending record.
class DumpError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Category { gender, profession, race, religion };
enum class Condition { stereotype, anti_stereotype, irrelevant };

inline constexpr std::array<Category, 4> kCategories{
    Category::gender, Category::profession, Category::race, Category::religion};

std::string_view to_string(Category c);
std::string_view to_string(Condition c);
std::optional<Category> parse_category(std::string_view s);
std::optional<Condition> parse_condition(std::string_view s);

struct ManifestEntry {
    std::string example_id;
    Category category = Category::gender;
    std::string group;
    Condition condition = Condition::stereotype;
    int layer_count = 0;
    int head_count = 0;
    int seq_len = 0;
    std::string blob_path;  // relative to the manifest directory
    std::uint64_t byte_offset = 0;

    std::uint64_t payload_bytes() const;
};

/// Indices into Manifest::entries for the three conditions of one context.
struct ExampleTriple {
    std::string example_id;
    Category category = Category::gender;
    std::string group;
    std::array<std::size_t, 3> entry{};  // indexed by Condition

    std::size_t at(Condition c) const { return entry[static_cast<std::size_t>(c)]; }
};

struct ManifestOptions {
    // When false, examples missing a condition are skipped and listed in
    // Manifest::incomplete_examples instead of failing the read.
    bool require_complete_triples = false;
};

struct Manifest {
    std::filesystem::path directory;
    std::string model;
    int layer_count = 0;
    int head_count = 0;
    std::vector<ManifestEntry> entries;
    std::vector<ExampleTriple> triples;  // complete only, sorted by example_id
    std::vector<std::string> incomplete_examples;
};

Manifest read_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});

/// Row-major square attention matrix as stored in the dump (32-bit floats).
class AttentionMatrix {
public:
    AttentionMatrix() = default;
    AttentionMatrix(int size, std::vector<float> values);

    int size() const { return size_; }
    float operator()(int row, int col) const { return values_[static_cast<std::size_t>(row) * size_ + col]; }
    std::span<const float> values() const { return values_; }

private:
    int size_ = 0;
    std::vector<float> values_;
};

struct AttentionRecord {
    ManifestEntry entry;
    int layer = 0;
    int head = 0;
    AttentionMatrix matrix;
    double max_row_sum_error = 0.0;
};

enum class RowSumPolicy { warn, fail };

inline constexpr double kRowSumTolerance = 1e-3;

/// Complete undirected graph stored as its upper triangle, row by row:
/// (0,1), (0,2), ..., (0,n-1), (1,2), ...
class WeightedGraph {
public:
    WeightedGraph(int node_count, std::vector<double> weights);

    int node_count() const { return node_count_; }
    std::size_t edge_count() const { return weights_.size(); }
    std::span<const double> weights() const { return weights_; }
    double weight(int i, int j) const;

    static std::size_t edge_index(int node_count, int i, int j);

private:
    int node_count_;
    std::vector<double> weights_;
};

/// Read-only access to the blobs of a dump. Blobs are memory-mapped once at
/// construction and sizes are checked against every record, so load_matrix
/// may be called concurrently from any number of threads.
class AttentionStore {
public:
    explicit AttentionStore(Manifest manifest, RowSumPolicy policy = RowSumPolicy::warn);
    ~AttentionStore();
    AttentionStore(AttentionStore&&) noexcept;
    AttentionStore& operator=(AttentionStore&&) noexcept;

    const Manifest& manifest() const { return manifest_; }

    AttentionRecord load_matrix(const ManifestEntry& entry, int layer, int head) const;

    /// Number of matrices loaded so far whose rows missed the softmax sum by
    /// more than kRowSumTolerance (only counted under RowSumPolicy::warn).
    std::uint64_t row_sum_warnings() const { return row_sum_warnings_->load(); }

    /// SHA-256 over the manifest bytes followed by every blob in path order.
    std::string fingerprint() const;

private:
    struct MappedBlob;

    Manifest manifest_;
    RowSumPolicy policy_;
    std::map<std::string, std::unique_ptr<MappedBlob>> blobs_;
    std::unique_ptr<std::atomic<std::uint64_t>> row_sum_warnings_;
};

WeightedGraph symmetrize(const AttentionRecord& record);
WeightedGraph symmetrize(const AttentionMatrix& matrix);

struct ClusterKey {
    Category category = Category::gender;
    std::string group;
    int layer = 0;
    int head = 0;

    auto operator<=>(const ClusterKey&) const = default;
};

/// Graphs of one (category, group, layer, head). Position i in all three
/// lists descends from example_ids[i].
struct ClusterGraphs {
    std::vector<std::string> example_ids;
    std::vector<WeightedGraph> stereotype;
    std::vector<WeightedGraph> anti_stereotype;
    std::vector<WeightedGraph> irrelevant;
    bool skipped = false;

    std::size_t size() const { return example_ids.size(); }
};

inline constexpr int kDefaultMinClusterSize = 2;

std::map<ClusterKey, ClusterGraphs> build_clusters(const AttentionStore& store,
                                                   std::span<const ExampleTriple> triples,
                                                   int layer, int head,
                                                   int min_cluster_size = kDefaultMinClusterSize);

}  // namespace tdabias
