// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0
//
// The fusion regression network:
//
//   branch(x)  = BatchNorm(GELU(Linear(x) + LoRA(x)))        text and structure
//   fused      = GatedFuse(branch_text, branch_structure)
//   refined    = fused + Dropout(BatchNorm(GELU(Linear(fused))))
//   prediction = Linear(GELU(Linear(refined)))               hidden -> hidden/2 -> 1

#ifndef POLYLLMEM_MODEL_HPP
#define POLYLLMEM_MODEL_HPP

#include "polyllmem/ndmath.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace polyllmem::model {

struct ModelConfig {
    std::size_t llm_dim = 4096;
    std::size_t uni_dim = 1536;
    std::size_t hidden = 512;
    std::size_t rank = 8;
    double alpha = 16.0;
    double dropout = 0.1;
    bool use_lora = true;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;

    /// Throws InvalidArgument on inconsistent values.
    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Mutable view of one named tensor; rank-1 tensors have a single dim.
struct TensorView {
    std::string name;
    std::vector<std::size_t> shape;
    std::span<double> data;
};

struct ModelParams {
    ModelConfig config;
    nd::LinearLayer proj_llm;
    nd::LinearLayer proj_uni;
    nd::LoraAdapter lora_llm;
    nd::LoraAdapter lora_uni;
    nd::BatchNormState bn_llm;
    nd::BatchNormState bn_uni;
    nd::GateUnit gate;
    nd::LinearLayer refine;
    nd::BatchNormState bn_refine;
    nd::LinearLayer head_hidden;
    nd::LinearLayer head_out;

    /// Every tensor zero, with shapes from config. Used for gradients.
    static ModelParams zeros(const ModelConfig& config);
    /// Kaiming-uniform linears, zero biases, identity batch norms,
    /// LoRA A ~ N(0, 1/in) and B = 0.
    static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

    /// Trainable tensors in a fixed order. Batch-norm running statistics are
    /// excluded; LoRA tensors are excluded when config.use_lora is false.
    std::vector<TensorView> trainable();
    /// Running statistics.
    std::vector<TensorView> buffers();
    /// trainable() followed by buffers(): everything a checkpoint stores.
    std::vector<TensorView> all_tensors();
};

struct ForwardCache {
    nd::Mode mode = nd::Mode::Eval;
    nd::Tensor2 llm_in, uni_in;
    nd::Tensor2 llm_down, uni_down;     // x A^T
    nd::Tensor2 llm_pre, uni_pre;       // before GELU
    nd::BatchNormCache bn_llm, bn_uni;
    nd::Tensor2 llm_out, uni_out;       // branch outputs
    nd::Tensor2 gate_values;
    nd::Tensor2 fused;
    nd::Tensor2 refine_pre;
    nd::BatchNormCache bn_refine;
    std::vector<double> dropout_mask;
    nd::Tensor2 refined;
    nd::Tensor2 head_pre;
    nd::Tensor2 head_act;
};

/// One prediction per row. Train mode needs an rng when dropout > 0. Throws
/// Numerical naming the layer if a non-finite value appears.
std::vector<double> forward(const ModelParams& params, const nd::Tensor2& llm, const nd::Tensor2& uni, nd::Mode mode,
                            SplitMix64* rng = nullptr, ForwardCache* cache = nullptr);

/// Applies the batch statistics of a Train-mode forward to the running stats.
void update_running_stats(ModelParams& params, const ForwardCache& cache);

/// Gradients of sum_i dpred[i] * prediction[i]. Input gradients are written
/// when the pointers are non-null.
ModelParams backward(const ModelParams& params, const ForwardCache& cache, std::span<const double> dpred,
                     nd::Tensor2* d_llm = nullptr, nd::Tensor2* d_uni = nullptr);

enum class LossKind { MSE, MAE, Huber };

struct LossSpec {
    LossKind kind = LossKind::MSE;
    double delta = 1.0;  // Huber threshold
};

const char* loss_name(LossKind kind) noexcept;
LossKind parse_loss(const std::string& name);

/// Batch-mean loss.
double loss_value(std::span<const double> predictions, std::span<const double> targets, const LossSpec& loss);
/// d(loss)/d(prediction_i).
std::vector<double> loss_gradient(std::span<const double> predictions, std::span<const double> targets,
                                  const LossSpec& loss);

struct LossAndGrads {
    double loss = 0.0;
    ModelParams grads;
    ForwardCache cache;
};

LossAndGrads loss_and_grads(const ModelParams& params, const nd::Tensor2& llm, const nd::Tensor2& uni,
                            std::span<const double> targets, const LossSpec& loss, nd::Mode mode,
                            SplitMix64* rng = nullptr);

struct CheckpointMeta {
    std::string property;
    bool log_scale = false;
    double target_mean = 0.0;
    double target_std = 1.0;
    std::size_t epoch = 0;
    double val_loss = 0.0;
    std::uint64_t seed = 0;
    std::size_t fold = 0;
};

struct Checkpoint {
    ModelParams params;
    CheckpointMeta meta;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// PLYM: magic "PLYM" | version u16 | u32 length + JSON (config and meta) |
/// tensor count u32 | per tensor: name (u16 length + bytes), rank u8,
/// dims u32[rank], f64 payload. Little-endian throughout.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace polyllmem::model

#endif // POLYLLMEM_MODEL_HPP
