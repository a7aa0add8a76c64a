// Command-line front end: validate / analyze / report / selftest.
//
// Exit codes: 0 success, 1 validation or analysis error, 2 usage error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "tdabias/attn_store.hpp"
#include "tdabias/pipeline.hpp"
#include "tdabias/report.hpp"
#include "tdabias/selftest.hpp"

namespace fs = std::filesystem;
using namespace tdabias;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string manifest;
    std::string out;
    std::string dims = "both";
    std::string combine = "metric";
    int min_cluster_size = kDefaultMinClusterSize;
    std::vector<std::string> categories;
    std::vector<std::string> groups;
    int workers = 1;
    bool strict_rows = false;
    bool strict = false;
    std::uint64_t seed = 20240917;
};

AnalysisConfig to_config(const Options& o) {
    AnalysisConfig c;
    if (o.dims == "0")
        c.dims = {0};
    else if (o.dims == "1")
        c.dims = {1};
    else if (o.dims == "both")
        c.dims = {0, 1};
    else
        throw UsageError("--dims must be 0, 1 or both");
    auto mode = parse_combine_mode(o.combine);
    if (!mode) throw UsageError("--combine must be metric or statistic");
    c.combine_mode = *mode;
    c.min_cluster_size = o.min_cluster_size;
    c.categories = o.categories;
    c.groups = o.groups;
    c.workers = o.workers;
    try {
        validate(c);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return c;
}

AttentionStore open_store(const Options& o) {
    ManifestOptions mo;
    mo.require_complete_triples = o.strict;
    auto manifest = read_manifest(o.manifest, mo);
    for (const auto& id : manifest.incomplete_examples)
        std::cerr << "warning: example " << id << " is missing a condition; skipped\n";
    return AttentionStore(std::move(manifest), o.strict_rows ? RowSumPolicy::fail : RowSumPolicy::warn);
}

int cmd_validate(const Options& o) {
    const auto store = open_store(o);
    const auto& m = store.manifest();
    for (const auto& t : m.triples)
        for (auto c : {Condition::stereotype, Condition::anti_stereotype, Condition::irrelevant}) {
            const auto& entry = m.entries[t.at(c)];
            for (int l = 0; l < m.layer_count; ++l)
                for (int h = 0; h < m.head_count; ++h) (void)store.load_matrix(entry, l, h);
        }

    std::map<std::pair<Category, std::string>, std::size_t> counts;
    for (const auto& t : m.triples) ++counts[{t.category, t.group}];
    for (const auto& [key, n] : counts) fmt::print("{}\t{}\t{}\n", to_string(key.first), key.second, n);
    if (store.row_sum_warnings() > 0)
        std::cerr << "warning: " << store.row_sum_warnings() << " matrices have attention rows not summing to 1\n";
    fmt::print("OK, {} triples, {} incomplete examples skipped, {} layers x {} heads\n", m.triples.size(),
               m.incomplete_examples.size(), m.layer_count, m.head_count);
    return 0;
}

int cmd_analyze(const Options& o) {
    const auto config = to_config(o);
    const auto store = open_store(o);
    const auto rows = analyze(store, config);
    const auto info = make_run_info(store, config, rows, o.strict_rows);
    fs::create_directories(o.out);
    write_rows_csv(rows, fs::path(o.out) / "rows.csv");
    write_run_json(info, fs::path(o.out) / "run.json");
    fmt::print("{} keys analysed, {} skipped; wrote {}\n", info.total_keys, info.skipped_keys,
               (fs::path(o.out) / "rows.csv").string());
    return 0;
}

int cmd_report(const Options& o) {
    const fs::path dir(o.out);
    if (!fs::exists(dir / "rows.csv")) throw std::runtime_error(fmt::format("{} not found", (dir / "rows.csv").string()));
    const auto info = read_run_json(dir / "run.json");
    const auto rows = read_rows_csv(dir / "rows.csv");

    for (auto category : kCategories) {
        const bool present = std::any_of(rows.begin(), rows.end(), [&](const BiasRow& r) { return r.key.category == category; });
        if (!present) continue;
        const auto map = zscore_heatmap(rows, category, info.layer_count, info.head_count);
        for (const auto& w : map.warnings) std::cerr << "warning: " << to_string(category) << ": " << w << '\n';
        write_heatmap_csv(map, dir / heatmap_filename(category));
    }
    const auto summaries = group_summary(rows);
    write_summary_csv(summaries, dir / "summary.csv");

    for (auto category : kCategories) {
        const auto ex = extreme_groups(summaries, category);
        if (ex.top.empty()) continue;
        fmt::print("{} (combine mode: {})\n", to_string(category), to_string(info.combine_mode));
        auto line = [](const GroupSummary& s) {
            fmt::print("  {:<24} mean {:>9.3f}  min {:>9.3f}  max {:>9.3f}\n", s.group, s.mean, s.min, s.max);
        };
        for (const auto& s : ex.top) line(s);
        if (!ex.bottom.empty()) fmt::print("  ...\n");
        for (const auto& s : ex.bottom) line(s);
    }
    return 0;
}

int cmd_selftest(const Options& o) {
    bool ok = true;
    for (const auto& r : selftest::run_all(o.seed)) {
        fmt::print("{:<20} {}  {}\n", r.name, r.passed ? "PASS" : "FAIL", r.detail);
        ok = ok && r.passed;
    }
    return ok ? 0 : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Topological bias audit of transformer attention heads"};
    app.require_subcommand(1);
    Options o;

    auto add_input = [&](CLI::App* cmd) {
        cmd->add_option("--manifest", o.manifest, "attdump manifest.json")->required()->check(CLI::ExistingFile);
        cmd->add_flag("--strict-rows", o.strict_rows, "fail instead of warn when attention rows do not sum to 1");
        cmd->add_flag("--strict", o.strict, "fail on examples missing a condition");
    };

    auto* validate_cmd = app.add_subcommand("validate", "check a dump: triples, blob sizes, row sums");
    add_input(validate_cmd);

    auto* analyze_cmd = app.add_subcommand("analyze", "compute per-head bias rows");
    add_input(analyze_cmd);
    analyze_cmd->add_option("--out", o.out, "output directory")->required();
    analyze_cmd->add_option("--dims", o.dims, "0, 1 or both")->capture_default_str();
    analyze_cmd->add_option("--combine", o.combine, "metric or statistic")->capture_default_str();
    analyze_cmd->add_option("--min-cluster-size", o.min_cluster_size)->capture_default_str();
    analyze_cmd->add_option("--category", o.categories, "restrict to categories (repeatable)");
    analyze_cmd->add_option("--group", o.groups, "restrict to groups (repeatable)");
    analyze_cmd->add_option("--workers", o.workers)->capture_default_str();

    auto* report_cmd = app.add_subcommand("report", "heat maps and group summaries from rows.csv");
    report_cmd->add_option("--out", o.out, "directory holding rows.csv and run.json")->required();

    auto* selftest_cmd = app.add_subcommand("selftest", "run the oracle suites");
    selftest_cmd->add_option("--seed", o.seed, "seed for the randomized suites")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (validate_cmd->parsed()) return cmd_validate(o);
        if (analyze_cmd->parsed()) return cmd_analyze(o);
        if (report_cmd->parsed()) return cmd_report(o);
        if (selftest_cmd->parsed()) return cmd_selftest(o);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitUsage;
}
