// Writes a small planted-bias attdump for trying the CLI without a model run.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tdabias/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Write a synthetic planted-bias attention dump"};
    std::string out;
    tdabias::synthetic::PlantedBiasSpec spec;
    std::vector<std::string> groups;
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--seed", spec.seed)->capture_default_str();
    app.add_option("--examples", spec.examples_per_group, "contexts per group")->capture_default_str();
    app.add_option("--group", groups, "group names (repeatable; default: sister)");
    CLI11_PARSE(app, argc, argv);

    if (!groups.empty()) spec.groups = groups;
    try {
        tdabias::synthetic::write_planted_bias_dump(out, spec);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::cout << "wrote " << out << "/manifest.json (layer 0 head 0 biased, other heads null)\n";
    return 0;
}
