// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0
//
// Shared generators for tests: a random PSMILES corpus and planted-signal
// datasets.

#ifndef POLYLLMEM_TESTS_FIXTURES_HPP
#define POLYLLMEM_TESTS_FIXTURES_HPP

#include "polyllmem/embed_store.hpp"
#include "polyllmem/pipeline.hpp"
#include "polyllmem/trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fixtures {

/// One random, valid PSMILES string.
std::string random_psmiles(std::uint64_t seed);

/// `n` distinct valid PSMILES strings.
std::vector<std::string> psmiles_corpus(std::size_t n, std::uint64_t seed);

struct PlantedSet {
    std::vector<std::string> ids;
    std::vector<std::string> psmiles;
    polyllmem::embed::EmbeddingMatrix llm;
    polyllmem::embed::EmbeddingMatrix uni;
    std::vector<double> targets;  // training space
    polyllmem::train::PropertyData data;
};

struct PlantedOptions {
    std::size_t n = 500;
    std::size_t llm_dim = 64;
    std::size_t uni_dim = 32;
    double snr = 10.0;          // std(signal) / std(noise)
    bool pure_noise = false;    // targets independent of every feature
    std::string property = "Tg";
    double offset = 100.0;      // targets = offset + scale * standardized value
    double scale = 30.0;
};

/// Planted features in the text embeddings, a random linear target over them,
/// and Gaussian noise at the requested amplitude ratio.
PlantedSet planted_set(std::uint64_t seed, const PlantedOptions& options = {});

/// CSV text with header "id,psmiles,<property>".
std::string planted_csv(const PlantedSet& set, const std::string& property);

/// Tiny network config used by gradient and oracle tests.
polyllmem::model::ModelConfig tiny_config(std::size_t hidden = 8, std::size_t rank = 2);

/// Initialized parameters with nonzero LoRA B and non-trivial batch-norm
/// affine and running statistics.
polyllmem::model::ModelParams random_params(const polyllmem::model::ModelConfig& config, std::uint64_t seed);

polyllmem::nd::Tensor2 random_rows(std::size_t rows, std::size_t cols, std::uint64_t seed);

struct ModelGradCheck {
    double max_error = 0.0;      // over every trainable coordinate
    std::string worst_tensor;
    std::size_t coordinates = 0;
};

/// Central differences of the Eval-mode MSE loss against loss_and_grads.
ModelGradCheck model_grad_check(const polyllmem::model::ModelConfig& config, std::uint64_t seed,
                                std::size_t batch = 6);

struct LayerGradCheck {
    double gelu = 0.0;
    double linear = 0.0;
    double lora = 0.0;
    double batchnorm_train = 0.0;
    double batchnorm_eval = 0.0;
    double gate = 0.0;

    [[nodiscard]] double max() const;
};

/// Central differences of a random projection of each layer's output
/// against its backward pass, over inputs and parameters.
LayerGradCheck layer_grad_check(std::uint64_t seed);

} // namespace fixtures

#endif // POLYLLMEM_TESTS_FIXTURES_HPP
