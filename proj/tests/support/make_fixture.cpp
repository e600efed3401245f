// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0
//
// Writes a planted-signal dataset CSV for command-line tests.

#include "fixtures.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"planted-signal dataset generator"};
    std::string out;
    std::size_t n = 60;
    std::uint64_t seed = 42;
    std::string property = "Tg";
    bool noise = false;
    fixtures::PlantedOptions options;
    app.add_option("--out", out, "CSV path")->required();
    app.add_option("--n", n, "record count");
    app.add_option("--seed", seed, "seed shared with `embed synth`");
    app.add_option("--property", property, "property column");
    app.add_option("--llm-dim", options.llm_dim, "text embedding dim");
    app.add_option("--uni-dim", options.uni_dim, "structure embedding dim");
    app.add_flag("--noise", noise, "targets independent of the embeddings");
    CLI11_PARSE(app, argc, argv);

    options.n = n;
    options.property = property;
    options.pure_noise = noise;
    const auto set = fixtures::planted_set(seed, options);
    std::ofstream f(out, std::ios::binary);
    f << fixtures::planted_csv(set, property);
    if (!f) {
        std::cerr << "cannot write " << out << '\n';
        return 1;
    }
    return 0;
}
