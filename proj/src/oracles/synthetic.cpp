#include "tdabias/synthetic.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

namespace tdabias::synthetic {

AttentionMatrix causal_softmax(int size, const std::vector<double>& logits) {
    if (logits.size() != static_cast<std::size_t>(size) * static_cast<std::size_t>(size))
        throw std::invalid_argument("logits must be size x size");
    std::vector<float> out(logits.size(), 0.0f);
    for (int r = 0; r < size; ++r) {
        double peak = -HUGE_VAL;
        for (int c = 0; c <= r; ++c) peak = std::max(peak, logits[static_cast<std::size_t>(r) * size + c]);
        double total = 0.0;
        std::vector<double> e(static_cast<std::size_t>(r) + 1);
        for (int c = 0; c <= r; ++c)
            total += (e[static_cast<std::size_t>(c)] = std::exp(logits[static_cast<std::size_t>(r) * size + c] - peak));
        for (int c = 0; c <= r; ++c)
            out[static_cast<std::size_t>(r) * size + c] = static_cast<float>(e[static_cast<std::size_t>(c)] / total);
    }
    return AttentionMatrix(size, std::move(out));
}

void write_dump(const std::filesystem::path& dir, const std::string& model, int layer_count, int head_count,
                const std::vector<DumpRecord>& records) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["version"] = "attdump-1";
    manifest["model"] = model;
    manifest["layer_count"] = layer_count;
    manifest["head_count"] = head_count;
    manifest["records"] = nlohmann::ordered_json::array();

    std::map<std::string, std::uint64_t> blob_sizes;
    std::map<std::string, std::ofstream> blobs;
    for (const auto& rec : records) {
        if (rec.heads.size() != static_cast<std::size_t>(layer_count) * static_cast<std::size_t>(head_count))
            throw std::invalid_argument(fmt::format("record {} has the wrong number of heads", rec.example_id));
        const int seq = rec.heads.front().size();
        const std::string blob = fmt::format("{}.bin", rec.example_id);
        auto [it, fresh] = blobs.try_emplace(blob);
        if (fresh) {
            it->second.open(dir / blob, std::ios::binary | std::ios::trunc);
            if (!it->second) throw std::runtime_error(fmt::format("cannot write {}", (dir / blob).string()));
        }
        auto& out = it->second;

        manifest["records"].push_back({{"example_id", rec.example_id},
                                       {"category", std::string(to_string(rec.category))},
                                       {"group", rec.group},
                                       {"condition", std::string(to_string(rec.condition))},
                                       {"seq_len", seq},
                                       {"blob", blob},
                                       {"offset", blob_sizes[blob]}});
        for (const auto& m : rec.heads) {
            if (m.size() != seq) throw std::invalid_argument("all heads of a record share seq_len");
            for (float v : m.values()) {
                auto bits = std::bit_cast<std::uint32_t>(v);
                unsigned char le[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                       static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
                out.write(reinterpret_cast<const char*>(le), 4);
            }
        }
        blob_sizes[blob] += static_cast<std::uint64_t>(rec.heads.size()) * static_cast<std::uint64_t>(seq) * seq * 4u;
    }
    for (auto& [name, out] : blobs) {
        out.close();
        if (!out) throw std::runtime_error(fmt::format("write failed for {}", name));
    }
    std::ofstream mf(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    mf << manifest.dump(2) << '\n';
    if (!mf) throw std::runtime_error("cannot write manifest.json");
}

void write_planted_bias_dump(const std::filesystem::path& dir, const PlantedBiasSpec& spec) {
    const int heads = spec.layer_count * spec.head_count;
    if (static_cast<int>(spec.heads.size()) != heads)
        throw std::invalid_argument("one HeadKind per (layer, head) is required");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto cells = static_cast<std::size_t>(spec.seq_len) * static_cast<std::size_t>(spec.seq_len);
    auto perturb = [&](const std::vector<double>& base, double sd) {
        std::vector<double> out(base);
        for (auto& x : out) x += sd * gauss(rng);
        return out;
    };

    // Each head has a fixed attention pattern that all conditions fluctuate around.
    std::vector<std::vector<double>> templates(static_cast<std::size_t>(heads), std::vector<double>(cells));
    for (auto& t : templates)
        for (auto& x : t) x = 1.5 * gauss(rng);

    std::vector<DumpRecord> records;
    for (const auto& group : spec.groups) {
        for (int e = 0; e < spec.examples_per_group; ++e) {
            const std::string id = fmt::format("{}-{:04d}", group, e);
            std::array<DumpRecord, 3> triple;
            for (auto c : {Condition::stereotype, Condition::anti_stereotype, Condition::irrelevant}) {
                auto& r = triple[static_cast<std::size_t>(c)];
                r.example_id = id;
                r.category = spec.category;
                r.group = group;
                r.condition = c;
            }
            for (int h = 0; h < heads; ++h) {
                const auto& t = templates[static_cast<std::size_t>(h)];
                std::vector<double> s, a;
                if (spec.heads[static_cast<std::size_t>(h)] == HeadKind::biased) {
                    s = perturb(t, spec.tight_noise);
                    a = perturb(t, spec.dispersed_noise);
                } else {
                    const auto context = perturb(t, spec.null_noise);
                    s = perturb(context, spec.null_perturbation);
                    a = perturb(context, spec.null_perturbation);
                }
                const auto i = perturb(t, spec.irrelevant_noise);
                triple[0].heads.push_back(causal_softmax(spec.seq_len, s));
                triple[1].heads.push_back(causal_softmax(spec.seq_len, a));
                triple[2].heads.push_back(causal_softmax(spec.seq_len, i));
            }
            for (auto& r : triple) records.push_back(std::move(r));
        }
    }
    write_dump(dir, "synthetic-planted-bias", spec.layer_count, spec.head_count, records);
}

}  // namespace tdabias::synthetic
