#include "tdabias/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

namespace tdabias {

namespace {

using nlohmann::ordered_json;

constexpr std::string_view kRowsHeader =
    "category,group,layer,head,n,var_S0,var_A0,var_I0,S0,p0,T0,var_S1,var_A1,var_I1,S1,p1,T1,combined,skipped,reason";
constexpr std::string_view kSummaryHeader = "category,group,mean,std,min,max,heads_used";

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else {
            fields.back() += c;
        }
    }
    return fields;
}

std::string number(double v) { return fmt::format("{}", v); }

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw std::runtime_error(fmt::format("{}: bad number '{}'", where, s));
    return v;
}

int parse_int(const std::string& s, const std::string& where) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw std::runtime_error(fmt::format("{}: bad integer '{}'", where, s));
    return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
    return out;
}

void check_written(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw std::runtime_error(fmt::format("write failed for {}", path.string()));
}

struct PopulationStats {
    double mean = 0.0, std = 0.0, min = 0.0, max = 0.0;
};

PopulationStats population_stats(const std::vector<double>& xs) {
    PopulationStats s;
    s.min = *std::min_element(xs.begin(), xs.end());
    s.max = *std::max_element(xs.begin(), xs.end());
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    double sq = 0.0;
    for (double x : xs) sq += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(xs.size()));
    // Rounding can put the mean a hair outside [min, max] for constant data.
    s.mean = std::clamp(s.mean, s.min, s.max);
    return s;
}

// Usable rows of a category, grouped by group name and ordered by (layer, head).
std::map<std::string, std::vector<const BiasRow*>> rows_by_group(const std::vector<BiasRow>& rows, Category category) {
    std::map<std::string, std::vector<const BiasRow*>> groups;
    for (const auto& r : rows)
        if (r.key.category == category && r.combined) groups[r.key.group].push_back(&r);
    for (auto& [g, list] : groups)
        std::sort(list.begin(), list.end(), [](const BiasRow* a, const BiasRow* b) { return a->key < b->key; });
    return groups;
}

}  // namespace

HeatMap zscore_heatmap(const std::vector<BiasRow>& rows, Category category, int layer_count, int head_count) {
    if (std::none_of(rows.begin(), rows.end(), [&](const BiasRow& r) { return r.key.category == category; }))
        throw std::invalid_argument(fmt::format("no rows for category {}", to_string(category)));

    HeatMap map;
    map.category = category;
    map.layer_count = layer_count;
    map.head_count = head_count;
    const auto cells = static_cast<std::size_t>(layer_count) * static_cast<std::size_t>(head_count);
    std::vector<double> sum(cells, 0.0);
    std::vector<int> count(cells, 0);

    for (const auto& [group, list] : rows_by_group(rows, category)) {
        if (list.size() < 2) {
            map.warnings.push_back(fmt::format("group '{}' has fewer than 2 usable heads", group));
            continue;
        }
        std::vector<double> magnitudes;
        for (const BiasRow* r : list) magnitudes.push_back(std::abs(*r->combined));
        const auto stats = population_stats(magnitudes);
        if (!(stats.std > 0.0)) {
            map.warnings.push_back(fmt::format("group '{}' has zero spread across heads", group));
            continue;
        }
        for (std::size_t i = 0; i < list.size(); ++i) {
            const auto& key = list[i]->key;
            if (key.layer < 0 || key.layer >= layer_count || key.head < 0 || key.head >= head_count)
                throw std::out_of_range(fmt::format("row for layer {}, head {} outside the {}x{} grid", key.layer,
                                                    key.head, layer_count, head_count));
            const auto cell = static_cast<std::size_t>(key.layer) * head_count + key.head;
            sum[cell] += (magnitudes[i] - stats.mean) / stats.std;
            ++count[cell];
        }
        ++map.group_count;
    }

    map.cells.resize(cells);
    for (std::size_t c = 0; c < cells; ++c)
        if (count[c] > 0) map.cells[c] = sum[c] / count[c];
    return map;
}

std::vector<GroupSummary> group_summary(const std::vector<BiasRow>& rows) {
    std::vector<GroupSummary> out;
    for (auto category : kCategories) {
        std::vector<GroupSummary> cat;
        for (const auto& [group, list] : rows_by_group(rows, category)) {
            std::vector<double> values;
            for (const BiasRow* r : list) values.push_back(*r->combined);
            const auto stats = population_stats(values);
            cat.push_back({category, group, stats.mean, stats.std, stats.min, stats.max,
                           static_cast<int>(values.size())});
        }
        std::sort(cat.begin(), cat.end(), [](const GroupSummary& a, const GroupSummary& b) {
            if (a.mean != b.mean) return a.mean > b.mean;
            return a.group < b.group;
        });
        out.insert(out.end(), cat.begin(), cat.end());
    }
    return out;
}

ExtremeGroups extreme_groups(const std::vector<GroupSummary>& summaries, Category category, std::size_t k) {
    std::vector<GroupSummary> cat;
    for (const auto& s : summaries)
        if (s.category == category) cat.push_back(s);
    std::sort(cat.begin(), cat.end(), [](const GroupSummary& a, const GroupSummary& b) {
        if (a.mean != b.mean) return a.mean > b.mean;
        return a.group < b.group;
    });
    ExtremeGroups ex;
    if (cat.size() <= 2 * k) {
        ex.top = cat;
        return ex;
    }
    ex.top.assign(cat.begin(), cat.begin() + static_cast<std::ptrdiff_t>(k));
    ex.bottom.assign(cat.end() - static_cast<std::ptrdiff_t>(k), cat.end());
    return ex;
}

void tally_rows(const std::vector<BiasRow>& rows, RunInfo& info) {
    info.total_keys = rows.size();
    info.used_keys = 0;
    info.skipped_keys = 0;
    info.skipped_by_reason.clear();
    info.clamped_variances = 0;
    for (const auto& r : rows) {
        for (const auto& d : r.dims)
            if (d) info.clamped_variances += static_cast<std::uint64_t>(d->clamped);
        if (!r.skipped) {
            ++info.used_keys;
            continue;
        }
        ++info.skipped_keys;
        std::stringstream reasons(r.reason);
        std::string part;
        while (std::getline(reasons, part, ';')) ++info.skipped_by_reason[part];
    }
}

void write_rows_csv(const std::vector<BiasRow>& rows, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << kRowsHeader << '\n';
    for (const auto& r : rows) {
        out << to_string(r.key.category) << ',' << csv_field(r.key.group) << ',' << r.key.layer << ','
            << r.key.head << ',' << r.n;
        for (const auto& d : r.dims) {
            if (d)
                out << ',' << number(d->statistic.var_stereotype) << ',' << number(d->statistic.var_anti) << ','
                    << number(d->statistic.var_irrelevant) << ',' << number(d->statistic.value) << ','
                    << number(d->p) << ',' << number(d->metric);
            else
                out << ",,,,,,";
        }
        out << ',' << (r.combined ? number(*r.combined) : std::string{}) << ',' << (r.skipped ? "true" : "false")
            << ',' << csv_field(r.reason) << '\n';
    }
    check_written(out, path);
}

std::vector<BiasRow> read_rows_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
    std::string line;
    if (!std::getline(in, line) || line != kRowsHeader)
        throw std::runtime_error(fmt::format("{}: unexpected header", path.string()));

    std::vector<BiasRow> rows;
    for (int lineno = 2; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        const std::string where = fmt::format("{}:{}", path.string(), lineno);
        const auto f = split_csv_line(line);
        if (f.size() != 20) throw std::runtime_error(fmt::format("{}: expected 20 fields, got {}", where, f.size()));
        BiasRow r;
        auto cat = parse_category(f[0]);
        if (!cat) throw std::runtime_error(fmt::format("{}: unknown category '{}'", where, f[0]));
        r.key = ClusterKey{*cat, f[1], parse_int(f[2], where), parse_int(f[3], where)};
        r.n = parse_int(f[4], where);
        for (std::size_t k = 0; k < 2; ++k) {
            const std::size_t base = 5 + 6 * k;
            if (f[base].empty()) continue;
            DimensionResult d;
            d.statistic.var_stereotype = parse_double(f[base], where);
            d.statistic.var_anti = parse_double(f[base + 1], where);
            d.statistic.var_irrelevant = parse_double(f[base + 2], where);
            d.statistic.value = parse_double(f[base + 3], where);
            d.p = parse_double(f[base + 4], where);
            d.metric = parse_double(f[base + 5], where);
            r.dims[k] = d;
        }
        if (!f[17].empty()) r.combined = parse_double(f[17], where);
        if (f[18] != "true" && f[18] != "false")
            throw std::runtime_error(fmt::format("{}: skipped must be true or false", where));
        r.skipped = f[18] == "true";
        r.reason = f[19];
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_heatmap_csv(const HeatMap& map, const std::filesystem::path& path) {
    auto out = open_out(path);
    for (int l = 0; l < map.layer_count; ++l) {
        for (int h = 0; h < map.head_count; ++h) {
            if (h > 0) out << ',';
            if (const auto& v = map.at(l, h)) out << number(*v);
        }
        out << '\n';
    }
    check_written(out, path);
}

void write_summary_csv(const std::vector<GroupSummary>& summaries, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << kSummaryHeader << '\n';
    for (const auto& s : summaries)
        out << to_string(s.category) << ',' << csv_field(s.group) << ',' << number(s.mean) << ',' << number(s.std)
            << ',' << number(s.min) << ',' << number(s.max) << ',' << s.heads_used << '\n';
    check_written(out, path);
}

void write_run_json(const RunInfo& info, const std::filesystem::path& path) {
    ordered_json j;
    j["version"] = info.tool_version;
    j["model"] = info.model;
    j["dump_fingerprint"] = info.fingerprint;
    j["layer_count"] = info.layer_count;
    j["head_count"] = info.head_count;
    j["dims"] = info.dims;
    j["combine_mode"] = std::string(to_string(info.combine_mode));
    j["min_cluster_size"] = info.min_cluster_size;
    j["strict_rows"] = info.strict_rows;
    j["std_convention"] = "population";
    j["category_filter"] = info.category_filter;
    j["group_filter"] = info.group_filter;
    j["complete_triples"] = info.complete_triples;
    j["incomplete_examples"] = info.incomplete_examples;
    j["total_keys"] = info.total_keys;
    j["used_keys"] = info.used_keys;
    j["skipped_keys"] = info.skipped_keys;
    ordered_json reasons = ordered_json::object();
    for (const auto& [reason, count] : info.skipped_by_reason) reasons[reason] = count;
    j["skipped_by_reason"] = reasons;
    j["clamped_variances"] = info.clamped_variances;
    j["row_sum_warnings"] = info.row_sum_warnings;

    auto out = open_out(path);
    out << j.dump(2) << '\n';
    check_written(out, path);
}

RunInfo read_run_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
        RunInfo info;
        info.tool_version = j.at("version").get<std::string>();
        info.model = j.value("model", std::string{});
        info.fingerprint = j.value("dump_fingerprint", std::string{});
        info.layer_count = j.at("layer_count").get<int>();
        info.head_count = j.at("head_count").get<int>();
        info.dims = j.at("dims").get<std::vector<int>>();
        auto mode = parse_combine_mode(j.at("combine_mode").get<std::string>());
        if (!mode) throw std::runtime_error("unknown combine_mode");
        info.combine_mode = *mode;
        info.min_cluster_size = j.at("min_cluster_size").get<int>();
        info.strict_rows = j.value("strict_rows", false);
        info.category_filter = j.value("category_filter", std::vector<std::string>{});
        info.group_filter = j.value("group_filter", std::vector<std::string>{});
        info.complete_triples = j.value("complete_triples", std::size_t{0});
        info.incomplete_examples = j.value("incomplete_examples", std::size_t{0});
        info.total_keys = j.value("total_keys", std::size_t{0});
        info.used_keys = j.value("used_keys", std::size_t{0});
        info.skipped_keys = j.value("skipped_keys", std::size_t{0});
        info.skipped_by_reason = j.value("skipped_by_reason", std::map<std::string, std::size_t>{});
        info.clamped_variances = j.value("clamped_variances", std::uint64_t{0});
        info.row_sum_warnings = j.value("row_sum_warnings", std::uint64_t{0});
        return info;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::string heatmap_filename(Category c) { return fmt::format("heatmap_{}.csv", to_string(c)); }

void emit(const std::vector<BiasRow>& rows, const std::vector<HeatMap>& heatmaps,
          const std::vector<GroupSummary>& summaries, const RunInfo& info, const std::filesystem::path& output_dir) {
    std::filesystem::create_directories(output_dir);
    write_rows_csv(rows, output_dir / "rows.csv");
    for (const auto& m : heatmaps) write_heatmap_csv(m, output_dir / heatmap_filename(m.category));
    write_summary_csv(summaries, output_dir / "summary.csv");
    write_run_json(info, output_dir / "run.json");
}

}  // namespace tdabias
