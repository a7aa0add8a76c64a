#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tdabias/attn_store.hpp"
#include "tdabias/bias_stat.hpp"

namespace tdabias {

/// Per-category map over (layer, head) of z-scores of |combined| averaged
/// over groups.
struct HeatMap {
    Category category = Category::gender;
    int layer_count = 0;
    int head_count = 0;
    std::vector<std::optional<double>> cells;  // row-major layer x head; nullopt = no group contributed
    int group_count = 0;                       // groups that contributed
    std::vector<std::string> warnings;

    const std::optional<double>& at(int layer, int head) const {
        return cells[static_cast<std::size_t>(layer) * head_count + head];
    }
};

struct GroupSummary {
    Category category = Category::gender;
    std::string group;
    double mean = 0.0;
    double std = 0.0;  // population
    double min = 0.0;
    double max = 0.0;
    int heads_used = 0;
};

/// Rows contribute when they carry a combined value. Groups need at least two
/// such heads with non-zero spread; others are dropped with a warning.
/// Throws std::invalid_argument if no row belongs to `category`.
HeatMap zscore_heatmap(const std::vector<BiasRow>& rows, Category category, int layer_count, int head_count);

/// Sorted by category, then mean descending, then group name.
std::vector<GroupSummary> group_summary(const std::vector<BiasRow>& rows);

struct ExtremeGroups {
    std::vector<GroupSummary> top;     // largest means first
    std::vector<GroupSummary> bottom;  // ends with the smallest mean
};

/// The k largest and k smallest means of a category; when the category has at
/// most 2k groups every group is returned in `top`.
ExtremeGroups extreme_groups(const std::vector<GroupSummary>& summaries, Category category, std::size_t k = 2);

struct RunInfo {
    std::string tool_version = "tdabias-1";
    std::string model;
    std::string fingerprint;
    int layer_count = 0;
    int head_count = 0;
    std::vector<int> dims{0, 1};
    CombineMode combine_mode = CombineMode::metric;
    int min_cluster_size = kDefaultMinClusterSize;
    bool strict_rows = false;
    std::vector<std::string> category_filter;
    std::vector<std::string> group_filter;
    std::size_t complete_triples = 0;
    std::size_t incomplete_examples = 0;
    std::size_t total_keys = 0;
    std::size_t used_keys = 0;
    std::size_t skipped_keys = 0;
    std::map<std::string, std::size_t> skipped_by_reason;
    std::uint64_t clamped_variances = 0;
    std::uint64_t row_sum_warnings = 0;
};

/// Fills the key counters of `info` from the rows.
void tally_rows(const std::vector<BiasRow>& rows, RunInfo& info);

void write_rows_csv(const std::vector<BiasRow>& rows, const std::filesystem::path& path);
std::vector<BiasRow> read_rows_csv(const std::filesystem::path& path);
void write_heatmap_csv(const HeatMap& map, const std::filesystem::path& path);
void write_summary_csv(const std::vector<GroupSummary>& summaries, const std::filesystem::path& path);
void write_run_json(const RunInfo& info, const std::filesystem::path& path);
RunInfo read_run_json(const std::filesystem::path& path);

std::string heatmap_filename(Category c);

/// Writes rows.csv, heatmap_<category>.csv for each map, summary.csv and run.json.
void emit(const std::vector<BiasRow>& rows, const std::vector<HeatMap>& heatmaps,
          const std::vector<GroupSummary>& summaries, const RunInfo& info, const std::filesystem::path& output_dir);

}  // namespace tdabias
