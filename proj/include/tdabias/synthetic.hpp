#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tdabias/attn_store.hpp"

namespace tdabias::synthetic {

/// Row-wise softmax over the causal prefix (columns <= row); the rest is 0.
AttentionMatrix causal_softmax(int size, const std::vector<double>& logits);

struct DumpRecord {
    std::string example_id;
    Category category = Category::gender;
    std::string group;
    Condition condition = Condition::stereotype;
    std::vector<AttentionMatrix> heads;  // layer-major: index layer * head_count + head
};

/// Writes an attdump-1 manifest.json plus one blob per example_id (its
/// records back to back) into `dir`.
void write_dump(const std::filesystem::path& dir, const std::string& model, int layer_count, int head_count,
                const std::vector<DumpRecord>& records);

enum class HeadKind {
    biased,  // tight stereotypes, dispersed anti-stereotypes
    null,    // stereotype and anti-stereotype of a context are equal-scale perturbations of one draw
};

struct PlantedBiasSpec {
    std::uint64_t seed = 7;
    int layer_count = 2;
    int head_count = 2;
    int seq_len = 8;
    int examples_per_group = 20;
    Category category = Category::gender;
    std::vector<std::string> groups{"sister"};
    std::vector<HeadKind> heads{HeadKind::biased, HeadKind::null, HeadKind::null, HeadKind::null};

    double tight_noise = 0.02;
    double dispersed_noise = 1.2;
    double null_noise = 0.6;         // per-context draw shared by S and A
    double null_perturbation = 0.005;  // S and A around that draw; |S| scales with it
    double irrelevant_noise = 2.0;
};

void write_planted_bias_dump(const std::filesystem::path& dir, const PlantedBiasSpec& spec);

}  // namespace tdabias::synthetic
