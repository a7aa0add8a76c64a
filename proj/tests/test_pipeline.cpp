#include "tdabias/pipeline.hpp"

#include <algorithm>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "tdabias/synthetic.hpp"
#include "test_util.hpp"

namespace tdabias {
namespace {

using testing::read_bytes;
using testing::TempDir;

synthetic::PlantedBiasSpec two_groups() {
    synthetic::PlantedBiasSpec spec;
    spec.groups = {"sister", "herself"};
    spec.examples_per_group = 6;
    return spec;
}

void expect_same_values(const BiasRow& a, const BiasRow& b) {
    EXPECT_EQ(a.key, b.key);
    EXPECT_EQ(a.n, b.n);
    EXPECT_EQ(a.skipped, b.skipped);
    EXPECT_EQ(a.combined, b.combined);
    for (std::size_t k = 0; k < 2; ++k) {
        ASSERT_EQ(a.dims[k].has_value(), b.dims[k].has_value());
        if (!a.dims[k]) continue;
        EXPECT_EQ(a.dims[k]->statistic.value, b.dims[k]->statistic.value);
        EXPECT_EQ(a.dims[k]->p, b.dims[k]->p);
        EXPECT_EQ(a.dims[k]->metric, b.dims[k]->metric);
    }
}

TEST(Analyze, OneRowPerKeySorted) {
    TempDir dir("pipeline");
    synthetic::write_planted_bias_dump(dir.path(), two_groups());
    AttentionStore store(read_manifest(dir / "manifest.json"));
    const auto rows = analyze(store, {});
    ASSERT_EQ(rows.size(), 8u);
    EXPECT_TRUE(std::is_sorted(rows.begin(), rows.end(), [](const BiasRow& a, const BiasRow& b) { return a.key < b.key; }));
    for (const auto& r : rows) {
        EXPECT_FALSE(r.skipped) << r.reason;
        EXPECT_EQ(r.n, 6);
        ASSERT_TRUE(r.combined.has_value());
        EXPECT_EQ(*r.combined, (r.dims[0]->metric + r.dims[1]->metric) / 2.0);
        // seq_len 8: 7 births and 21 deaths for every graph.
        EXPECT_EQ(r.dims[0]->N, 7);
        EXPECT_EQ(r.dims[1]->N, 21);
    }
    const auto info = make_run_info(store, {}, rows, false);
    EXPECT_EQ(info.total_keys, 8u);
    EXPECT_EQ(info.used_keys, 8u);
    EXPECT_EQ(info.complete_triples, 12u);
    EXPECT_EQ(info.fingerprint, store.fingerprint());
    EXPECT_EQ(info.fingerprint.rfind("sha256:", 0), 0u);
}

TEST(Analyze, WorkerCountDoesNotChangeOutput) {
    TempDir dir("pipeline");
    synthetic::write_planted_bias_dump(dir.path(), two_groups());
    AttentionStore store(read_manifest(dir / "manifest.json"));
    AnalysisConfig one, many;
    many.workers = 8;
    write_rows_csv(analyze(store, one), dir / "one.csv");
    write_rows_csv(analyze(store, many), dir / "many.csv");
    EXPECT_EQ(read_bytes(dir / "one.csv"), read_bytes(dir / "many.csv"));
}

TEST(Analyze, FiltersOnlyDropRows) {
    TempDir dir("pipeline");
    synthetic::write_planted_bias_dump(dir.path(), two_groups());
    AttentionStore store(read_manifest(dir / "manifest.json"));
    const auto all = analyze(store, {});

    AnalysisConfig by_group;
    by_group.groups = {"herself"};
    const auto some = analyze(store, by_group);
    ASSERT_EQ(some.size(), 4u);
    for (const auto& r : some) {
        EXPECT_EQ(r.key.group, "herself");
        const auto it = std::find_if(all.begin(), all.end(), [&](const BiasRow& x) { return x.key == r.key; });
        ASSERT_NE(it, all.end());
        expect_same_values(r, *it);
    }

    AnalysisConfig other_category;
    other_category.categories = {"religion"};
    EXPECT_TRUE(analyze(store, other_category).empty());
    AnalysisConfig gender;
    gender.categories = {"gender"};
    EXPECT_EQ(analyze(store, gender).size(), 8u);
}

TEST(Analyze, ManifestOrderDoesNotMatter) {
    TempDir dir("pipeline");
    synthetic::write_planted_bias_dump(dir.path(), two_groups());
    const auto base = read_bytes(dir / "manifest.json");
    auto doc = nlohmann::json::parse(base);
    std::mt19937_64 rng(1);
    std::shuffle(doc["records"].begin(), doc["records"].end(), rng);
    testing::write_text(dir / "shuffled.json", doc.dump(1));

    AttentionStore a(read_manifest(dir / "manifest.json")), b(read_manifest(dir / "shuffled.json"));
    write_rows_csv(analyze(a, {}), dir / "a.csv");
    write_rows_csv(analyze(b, {}), dir / "b.csv");
    EXPECT_EQ(read_bytes(dir / "a.csv"), read_bytes(dir / "b.csv"));
}

TEST(Analyze, SingleDimensionLeavesCombinedEmpty) {
    TempDir dir("pipeline");
    synthetic::write_planted_bias_dump(dir.path(), two_groups());
    AttentionStore store(read_manifest(dir / "manifest.json"));
    AnalysisConfig dim1;
    dim1.dims = {1};
    for (const auto& r : analyze(store, dim1)) {
        EXPECT_FALSE(r.dims[0].has_value());
        EXPECT_TRUE(r.dims[1].has_value());
        EXPECT_FALSE(r.combined.has_value());
        EXPECT_FALSE(r.skipped);
    }
}

TEST(Analyze, CombineModeStatistic) {
    TempDir dir("pipeline");
    synthetic::write_planted_bias_dump(dir.path(), two_groups());
    AttentionStore store(read_manifest(dir / "manifest.json"));
    AnalysisConfig cfg;
    cfg.combine_mode = CombineMode::statistic;
    for (const auto& r : analyze(store, cfg))
        EXPECT_EQ(*r.combined, (r.dims[0]->statistic.value + r.dims[1]->statistic.value) / 2.0);
}

std::vector<synthetic::DumpRecord> records(const std::vector<std::tuple<std::string, std::string, int>>& examples) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g;
    std::vector<synthetic::DumpRecord> out;
    for (const auto& [id, group, seq] : examples)
        for (auto c : {Condition::stereotype, Condition::anti_stereotype, Condition::irrelevant}) {
            std::vector<double> logits(static_cast<std::size_t>(seq * seq));
            for (auto& x : logits) x = 2.0 * g(rng);
            out.push_back({id, Category::race, group, c, {synthetic::causal_softmax(seq, logits)}});
        }
    return out;
}

TEST(Analyze, DegenerateKeysAreSkippedNotFatal) {
    TempDir dir("pipeline");
    synthetic::write_dump(dir.path(), "t", 1, 1,
                          records({{"a1", "alone", 5},
                                   {"p1", "pairs", 2},
                                   {"p2", "pairs", 2},
                                   {"p3", "pairs", 2},
                                   {"m1", "mixed", 6},
                                   {"m2", "mixed", 3},
                                   {"m3", "mixed", 4}}));
    AttentionStore store(read_manifest(dir / "manifest.json"));
    const auto rows = analyze(store, {});
    ASSERT_EQ(rows.size(), 3u);

    const auto& alone = rows[0];
    EXPECT_EQ(alone.key.group, "alone");
    EXPECT_TRUE(alone.skipped);
    EXPECT_EQ(alone.reason, "undersized");

    const auto& mixed = rows[1];
    EXPECT_EQ(mixed.key.group, "mixed");
    EXPECT_FALSE(mixed.skipped);
    // Joint N over every graph of the key: largest seq_len is 6.
    EXPECT_EQ(mixed.dims[0]->N, 5);
    EXPECT_EQ(mixed.dims[1]->N, 10);

    // Two-token graphs have a single edge and no cycles.
    const auto& pairs = rows[2];
    EXPECT_TRUE(pairs.skipped);
    EXPECT_TRUE(pairs.dims[0].has_value());
    EXPECT_FALSE(pairs.dims[1].has_value());
    EXPECT_EQ(pairs.reason, "dim1:empty_persistence_set");
    EXPECT_FALSE(pairs.combined.has_value());

    RunInfo info = make_run_info(store, {}, rows, false);
    EXPECT_EQ(info.used_keys + info.skipped_keys, info.total_keys);
    EXPECT_EQ(info.skipped_by_reason.at("undersized"), 1u);
    EXPECT_EQ(info.skipped_by_reason.at("dim1:empty_persistence_set"), 1u);

    AnalysisConfig bigger;
    bigger.min_cluster_size = 4;
    for (const auto& r : analyze(store, bigger)) EXPECT_EQ(r.reason, "undersized");
}

TEST(AnalyzeDimension, ZeroIrrelevantSpreadIsDegenerate) {
    const PersistenceSets p{{0.1, 0.2}, {0.05}};
    const PersistenceSets q{{0.3, 0.6}, {0.01}};
    const std::vector<PersistenceSets> s = {p, q}, a = {q, p}, same = {p, p};
    try {
        analyze_dimension(s, a, same, 0);
        FAIL();
    } catch (const DegenerateCluster& e) {
        EXPECT_EQ(e.reason(), SkipReason::degenerate_irrelevant);
    }
    const auto d = analyze_dimension(s, a, s, 0);
    EXPECT_EQ(d.N, 2);
    EXPECT_EQ(d.statistic.value, 0.0);
}

TEST(Config, Validation) {
    AnalysisConfig c;
    EXPECT_NO_THROW(validate(c));
    c.dims = {};
    EXPECT_THROW(validate(c), std::invalid_argument);
    c.dims = {2};
    EXPECT_THROW(validate(c), std::invalid_argument);
    c = {};
    c.min_cluster_size = 1;
    EXPECT_THROW(validate(c), std::invalid_argument);
    c = {};
    c.workers = 0;
    EXPECT_THROW(validate(c), std::invalid_argument);
    c = {};
    c.categories = {"fruit"};
    EXPECT_THROW(validate(c), std::invalid_argument);
}

}  // namespace
}  // namespace tdabias
