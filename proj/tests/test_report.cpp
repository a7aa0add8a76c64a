#include "tdabias/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "test_util.hpp"

namespace tdabias {
namespace {

using testing::read_bytes;
using testing::TempDir;

BiasRow row(Category c, const std::string& group, int layer, int head, std::optional<double> combined) {
    BiasRow r;
    r.key = {c, group, layer, head};
    r.n = 4;
    r.combined = combined;
    if (combined) {
        for (auto& d : r.dims) {
            d.emplace();
            d->N = 3;
            d->statistic = {*combined, 0.1, 0.2, 0.3};
            d->p = 0.25;
            d->metric = 0.75 * *combined;
        }
    } else {
        r.skipped = true;
        r.reason = "dim0:undersized;dim1:undersized";
    }
    return r;
}

// Direct re-implementation: z-score per group, then average per cell.
std::map<std::pair<int, int>, double> reference_heatmap(const std::vector<BiasRow>& rows, Category c) {
    std::map<std::string, std::vector<const BiasRow*>> groups;
    for (const auto& r : rows)
        if (r.key.category == c && r.combined) groups[r.key.group].push_back(&r);
    std::map<std::pair<int, int>, std::vector<double>> cells;
    for (const auto& [g, list] : groups) {
        double mean = 0.0;
        for (auto* r : list) mean += std::abs(*r->combined);
        mean /= static_cast<double>(list.size());
        double var = 0.0;
        for (auto* r : list) var += std::pow(std::abs(*r->combined) - mean, 2);
        const double sd = std::sqrt(var / static_cast<double>(list.size()));
        if (list.size() < 2 || sd == 0.0) continue;
        for (auto* r : list) cells[{r->key.layer, r->key.head}].push_back((std::abs(*r->combined) - mean) / sd);
    }
    std::map<std::pair<int, int>, double> out;
    for (const auto& [cell, zs] : cells) {
        double s = 0.0;
        for (double z : zs) s += z;
        out[cell] = s / static_cast<double>(zs.size());
    }
    return out;
}

TEST(ZScoreHeatmap, ZeroSpreadGroupIsDropped) {
    const std::vector<BiasRow> rows = {row(Category::race, "x", 0, 0, 0.4), row(Category::race, "x", 0, 1, -0.4)};
    const auto map = zscore_heatmap(rows, Category::race, 1, 2);
    EXPECT_EQ(map.group_count, 0);
    ASSERT_EQ(map.warnings.size(), 1u);
    EXPECT_NE(map.warnings[0].find("x"), std::string::npos);
    EXPECT_TRUE(std::none_of(map.cells.begin(), map.cells.end(), [](const auto& c) { return c.has_value(); }));
}

TEST(ZScoreHeatmap, UsesPopulationStd) {
    // |combined| = [1, 3]: mean 2, population std 1, so z = -1, +1.
    const std::vector<BiasRow> rows = {row(Category::gender, "g", 0, 0, 1.0), row(Category::gender, "g", 0, 1, -3.0)};
    const auto map = zscore_heatmap(rows, Category::gender, 1, 2);
    EXPECT_EQ(map.group_count, 1);
    EXPECT_DOUBLE_EQ(*map.at(0, 0), -1.0);
    EXPECT_DOUBLE_EQ(*map.at(0, 1), 1.0);

    // Three heads, |combined| = [1, 3, 2]: z = [-sqrt(3/2), sqrt(3/2), 0].
    const std::vector<BiasRow> three = {row(Category::gender, "g", 0, 0, 1.0), row(Category::gender, "g", 0, 1, 3.0),
                                        row(Category::gender, "g", 0, 2, 2.0)};
    const auto m3 = zscore_heatmap(three, Category::gender, 1, 3);
    EXPECT_NEAR(*m3.at(0, 0), -std::sqrt(1.5), 1e-12);
    EXPECT_NEAR(*m3.at(0, 1), std::sqrt(1.5), 1e-12);
    EXPECT_NEAR(*m3.at(0, 2), 0.0, 1e-12);
}

TEST(ZScoreHeatmap, PerGroupZScoresAreStandardized) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    std::vector<BiasRow> rows;
    for (int l = 0; l < 3; ++l)
        for (int h = 0; h < 4; ++h) rows.push_back(row(Category::profession, "p", l, h, g(rng)));
    const auto map = zscore_heatmap(rows, Category::profession, 3, 4);
    double sum = 0.0, sq = 0.0;
    for (const auto& c : map.cells) {
        sum += *c;
        sq += *c * *c;
    }
    EXPECT_NEAR(sum / 12.0, 0.0, 1e-12);
    EXPECT_NEAR(sq / 12.0, 1.0, 1e-12);
}

TEST(ZScoreHeatmap, AveragesGroupsLikeTheReference) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    std::vector<BiasRow> rows;
    for (std::string group : {"a", "b", "c"})
        for (int l = 0; l < 2; ++l)
            for (int h = 0; h < 3; ++h) {
                const bool skip = group == "b" && l == 1 && h == 2;
                rows.push_back(row(Category::religion, group, l, h, skip ? std::nullopt : std::optional(g(rng))));
            }
    // A lone-head group in another category must not leak in.
    rows.push_back(row(Category::race, "r", 0, 0, 5.0));
    const auto map = zscore_heatmap(rows, Category::religion, 2, 3);
    const auto ref = reference_heatmap(rows, Category::religion);
    EXPECT_EQ(map.group_count, 3);
    for (int l = 0; l < 2; ++l)
        for (int h = 0; h < 3; ++h) {
            ASSERT_TRUE(map.at(l, h).has_value());
            EXPECT_NEAR(*map.at(l, h), ref.at({l, h}), 1e-12);
        }

    auto shuffled = rows;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto again = zscore_heatmap(shuffled, Category::religion, 2, 3);
    EXPECT_EQ(again.cells, map.cells);

    EXPECT_THROW(zscore_heatmap(rows, Category::gender, 2, 3), std::invalid_argument);
    EXPECT_THROW(zscore_heatmap(rows, Category::religion, 1, 3), std::out_of_range);
}

TEST(GroupSummary, StatsAndOrder) {
    const std::vector<BiasRow> rows = {
        row(Category::race, "low", 0, 0, -1.0), row(Category::race, "low", 0, 1, -2.0),
        row(Category::gender, "g", 0, 0, 1.0),  row(Category::gender, "g", 0, 1, 2.0),
        row(Category::gender, "g", 1, 0, 3.0),  row(Category::gender, "g", 1, 1, std::nullopt),
        row(Category::race, "high", 0, 0, 4.0),
    };
    const auto s = group_summary(rows);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_EQ(s[0].category, Category::gender);
    EXPECT_EQ(s[0].mean, 2.0);
    EXPECT_EQ(s[0].min, 1.0);
    EXPECT_EQ(s[0].max, 3.0);
    EXPECT_NEAR(s[0].std, std::sqrt(2.0 / 3.0), 1e-15);
    EXPECT_EQ(s[0].heads_used, 3);
    EXPECT_EQ(s[1].group, "high");
    EXPECT_EQ(s[1].std, 0.0);
    EXPECT_EQ(s[2].group, "low");
    for (const auto& g : s) {
        EXPECT_LE(g.min, g.mean);
        EXPECT_LE(g.mean, g.max);
    }
}

TEST(ExtremeGroups, TopAndBottom) {
    std::vector<GroupSummary> s;
    for (int i = 0; i < 6; ++i) s.push_back({Category::race, "g" + std::to_string(i), double(i), 0, 0, 0, 1});
    const auto ex = extreme_groups(s, Category::race);
    ASSERT_EQ(ex.top.size(), 2u);
    ASSERT_EQ(ex.bottom.size(), 2u);
    EXPECT_EQ(ex.top[0].group, "g5");
    EXPECT_EQ(ex.top[1].group, "g4");
    EXPECT_EQ(ex.bottom[0].group, "g1");
    EXPECT_EQ(ex.bottom[1].group, "g0");
    s.resize(3);
    const auto few = extreme_groups(s, Category::race);
    EXPECT_EQ(few.top.size(), 3u);
    EXPECT_TRUE(few.bottom.empty());
    EXPECT_TRUE(extreme_groups(s, Category::gender).top.empty());
}

TEST(RowsCsv, HeaderAndRoundTrip) {
    TempDir dir("report");
    std::vector<BiasRow> rows = {row(Category::gender, "sister, elder", 0, 1, 0.1 + 0.2),
                                 row(Category::religion, "say \"hi\"", 1, 0, std::nullopt)};
    rows[0].dims[1].reset();
    rows[0].combined.reset();
    write_rows_csv(rows, dir / "rows.csv");
    const auto text = read_bytes(dir / "rows.csv");
    EXPECT_EQ(text.substr(0, text.find('\n')),
              "category,group,layer,head,n,var_S0,var_A0,var_I0,S0,p0,T0,var_S1,var_A1,var_I1,S1,p1,T1,combined,"
              "skipped,reason");
    EXPECT_NE(text.find("\"sister, elder\""), std::string::npos);
    EXPECT_NE(text.find("\"say \"\"hi\"\"\""), std::string::npos);

    const auto back = read_rows_csv(dir / "rows.csv");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].key, rows[0].key);
    EXPECT_EQ(back[1].key, rows[1].key);
    ASSERT_TRUE(back[0].dims[0].has_value());
    EXPECT_EQ(back[0].dims[0]->statistic.value, rows[0].dims[0]->statistic.value);  // shortest round-trip repr
    EXPECT_FALSE(back[0].dims[1].has_value());
    EXPECT_FALSE(back[0].combined.has_value());
    EXPECT_TRUE(back[1].skipped);
    EXPECT_EQ(back[1].reason, rows[1].reason);

    write_rows_csv(back, dir / "again.csv");
    EXPECT_EQ(read_bytes(dir / "again.csv"), text);
}

TEST(RowsCsv, RejectsMalformedFiles) {
    TempDir dir("report");
    testing::write_text(dir / "bad.csv", "category,group\n");
    EXPECT_THROW(read_rows_csv(dir / "bad.csv"), std::runtime_error);
    EXPECT_THROW(read_rows_csv(dir / "missing.csv"), std::runtime_error);
}

TEST(HeatmapCsv, AbsentCellsAreEmpty) {
    TempDir dir("report");
    HeatMap m;
    m.layer_count = 2;
    m.head_count = 3;
    m.cells = {0.5, std::nullopt, -1.25, std::nullopt, std::nullopt, 2.0};
    write_heatmap_csv(m, dir / "h.csv");
    EXPECT_EQ(read_bytes(dir / "h.csv"), "0.5,,-1.25\n,,2\n");
    EXPECT_EQ(heatmap_filename(Category::religion), "heatmap_religion.csv");
}

TEST(RunJson, RoundTripAndCounts) {
    TempDir dir("report");
    const std::vector<BiasRow> rows = {row(Category::gender, "g", 0, 0, 1.0), row(Category::gender, "g", 0, 1, std::nullopt),
                                       row(Category::gender, "h", 0, 0, std::nullopt)};
    RunInfo info;
    info.model = "m";
    info.fingerprint = "sha256:00";
    info.layer_count = 1;
    info.head_count = 2;
    info.combine_mode = CombineMode::statistic;
    info.category_filter = {"gender"};
    tally_rows(rows, info);
    EXPECT_EQ(info.total_keys, 3u);
    EXPECT_EQ(info.used_keys + info.skipped_keys, info.total_keys);
    EXPECT_EQ(info.skipped_by_reason.at("dim0:undersized"), 2u);

    write_run_json(info, dir / "run.json");
    const auto j = nlohmann::json::parse(read_bytes(dir / "run.json"));
    EXPECT_EQ(j.at("std_convention"), "population");
    EXPECT_EQ(j.at("combine_mode"), "statistic");
    const auto back = read_run_json(dir / "run.json");
    EXPECT_EQ(back.fingerprint, info.fingerprint);
    EXPECT_EQ(back.combine_mode, CombineMode::statistic);
    EXPECT_EQ(back.head_count, 2);
    EXPECT_EQ(back.skipped_by_reason, info.skipped_by_reason);
    EXPECT_EQ(back.category_filter, info.category_filter);
}

TEST(Emit, EmptyRowsGiveHeadersOnly) {
    TempDir dir("report");
    RunInfo info;
    emit({}, {}, {}, info, dir.path());
    EXPECT_EQ(read_bytes(dir / "rows.csv"),
              "category,group,layer,head,n,var_S0,var_A0,var_I0,S0,p0,T0,var_S1,var_A1,var_I1,S1,p1,T1,combined,"
              "skipped,reason\n");
    EXPECT_EQ(read_bytes(dir / "summary.csv"), "category,group,mean,std,min,max,heads_used\n");
    EXPECT_TRUE(std::filesystem::exists(dir / "run.json"));
}

TEST(Emit, Deterministic) {
    TempDir a("report"), b("report");
    std::vector<BiasRow> rows;
    for (int h = 0; h < 3; ++h) rows.push_back(row(Category::gender, "g", 0, h, 0.1 * (h + 1)));
    const std::vector<HeatMap> maps = {zscore_heatmap(rows, Category::gender, 1, 3)};
    RunInfo info;
    tally_rows(rows, info);
    emit(rows, maps, group_summary(rows), info, a.path());
    emit(rows, maps, group_summary(rows), info, b.path());
    for (std::string f : {"rows.csv", "summary.csv", "run.json", "heatmap_gender.csv"})
        EXPECT_EQ(read_bytes(a / f), read_bytes(b / f)) << f;
}

}  // namespace
}  // namespace tdabias
