// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "polyllmem/model.hpp"
#include "polyllmem/binary_io.hpp"
#include "polyllmem/error.hpp"
#include "polyllmem/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace polyllmem::model {

using nd::Mode;
using nd::Tensor2;
using json = nlohmann::json;

namespace {

constexpr std::string_view kCheckpointMagic = "PLYM";

void check_finite(const Tensor2& t, const char* layer)
{
    if (!t.all_finite()) {
        fail(ErrorCode::Numerical, std::string("non-finite value produced by layer '") + layer + "'");
    }
}

void fill_uniform(Tensor2& t, double bound, SplitMix64& rng)
{
    for (auto& v : t.data()) {
        v = (2.0 * rng.uniform() - 1.0) * bound;
    }
}

void kaiming_uniform(nd::LinearLayer& layer, SplitMix64& rng)
{
    fill_uniform(layer.weight, std::sqrt(6.0 / static_cast<double>(layer.in_features())), rng);
}

TensorView view(std::string name, Tensor2& t)
{
    return {std::move(name), {t.rows(), t.cols()}, t.data()};
}

TensorView view(std::string name, std::vector<double>& v)
{
    return {std::move(name), {v.size()}, std::span<double>(v)};
}

Tensor2 add(const Tensor2& a, const Tensor2& b)
{
    Tensor2 out = a;
    out += b;
    return out;
}

json config_to_json(const ModelConfig& c)
{
    return json{{"llm_dim", c.llm_dim}, {"uni_dim", c.uni_dim},     {"hidden", c.hidden},
                {"rank", c.rank},       {"alpha", c.alpha},         {"dropout", c.dropout},
                {"use_lora", c.use_lora}, {"bn_momentum", c.bn_momentum}, {"bn_eps", c.bn_eps}};
}

ModelConfig config_from_json(const json& j)
{
    ModelConfig c;
    c.llm_dim = j.at("llm_dim").get<std::size_t>();
    c.uni_dim = j.at("uni_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.rank = j.at("rank").get<std::size_t>();
    c.alpha = j.at("alpha").get<double>();
    c.dropout = j.at("dropout").get<double>();
    c.use_lora = j.at("use_lora").get<bool>();
    c.bn_momentum = j.at("bn_momentum").get<double>();
    c.bn_eps = j.at("bn_eps").get<double>();
    return c;
}

} // namespace

void ModelConfig::validate() const
{
    require(llm_dim > 0 && uni_dim > 0, ErrorCode::InvalidArgument, "embedding dims must be positive");
    require(hidden >= 2, ErrorCode::InvalidArgument, "hidden size must be at least 2");
    if (use_lora) {
        require(rank >= 1 && rank <= std::min({hidden, llm_dim, uni_dim}), ErrorCode::InvalidArgument,
                "LoRA rank must lie in [1, min(hidden, input dims)]");
        require(alpha > 0.0, ErrorCode::InvalidArgument, "LoRA alpha must be positive");
    }
    require(dropout >= 0.0 && dropout < 1.0, ErrorCode::InvalidArgument, "dropout must lie in [0, 1)");
    require(bn_eps > 0.0, ErrorCode::InvalidArgument, "batch-norm eps must be positive");
    require(bn_momentum >= 0.0 && bn_momentum <= 1.0, ErrorCode::InvalidArgument,
            "batch-norm momentum must lie in [0, 1]");
}

ModelParams ModelParams::zeros(const ModelConfig& config)
{
    config.validate();
    const std::size_t h = config.hidden;
    const std::size_t r = config.use_lora ? config.rank : 0;
    auto zero_bn = [&] {
        return nd::BatchNormState{std::vector<double>(h, 0.0), std::vector<double>(h, 0.0),
                                  std::vector<double>(h, 0.0), std::vector<double>(h, 0.0), config.bn_momentum,
                                  config.bn_eps};
    };
    ModelParams p;
    p.config = config;
    p.proj_llm = nd::LinearLayer::zeros(h, config.llm_dim);
    p.proj_uni = nd::LinearLayer::zeros(h, config.uni_dim);
    p.lora_llm = nd::LoraAdapter::zeros(r, config.llm_dim, h, config.alpha);
    p.lora_uni = nd::LoraAdapter::zeros(r, config.uni_dim, h, config.alpha);
    p.bn_llm = zero_bn();
    p.bn_uni = zero_bn();
    p.gate = nd::GateUnit::zeros(h);
    p.refine = nd::LinearLayer::zeros(h, h);
    p.bn_refine = zero_bn();
    p.head_hidden = nd::LinearLayer::zeros(h / 2, h);
    p.head_out = nd::LinearLayer::zeros(1, h / 2);
    return p;
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed)
{
    ModelParams p = zeros(config);
    SplitMix64 rng(derive_seed(seed, "model-init"));
    kaiming_uniform(p.proj_llm, rng);
    kaiming_uniform(p.proj_uni, rng);
    if (config.use_lora) {
        for (auto* a : {&p.lora_llm.a, &p.lora_uni.a}) {
            const double std_dev = 1.0 / std::sqrt(static_cast<double>(a->cols()));
            for (auto& v : a->data()) {
                v = rng.normal() * std_dev;
            }
        }
    }
    p.bn_llm = nd::BatchNormState::identity(config.hidden, config.bn_momentum, config.bn_eps);
    p.bn_uni = nd::BatchNormState::identity(config.hidden, config.bn_momentum, config.bn_eps);
    p.bn_refine = nd::BatchNormState::identity(config.hidden, config.bn_momentum, config.bn_eps);
    fill_uniform(p.gate.weight, std::sqrt(6.0 / static_cast<double>(p.gate.weight.cols())), rng);
    kaiming_uniform(p.refine, rng);
    kaiming_uniform(p.head_hidden, rng);
    kaiming_uniform(p.head_out, rng);
    return p;
}

std::vector<TensorView> ModelParams::trainable()
{
    std::vector<TensorView> out{
        view("proj_llm.weight", proj_llm.weight), view("proj_llm.bias", proj_llm.bias),
        view("proj_uni.weight", proj_uni.weight), view("proj_uni.bias", proj_uni.bias),
    };
    if (config.use_lora) {
        out.push_back(view("lora_llm.a", lora_llm.a));
        out.push_back(view("lora_llm.b", lora_llm.b));
        out.push_back(view("lora_uni.a", lora_uni.a));
        out.push_back(view("lora_uni.b", lora_uni.b));
    }
    for (auto v : {view("bn_llm.gamma", bn_llm.gamma), view("bn_llm.beta", bn_llm.beta),
                   view("bn_uni.gamma", bn_uni.gamma), view("bn_uni.beta", bn_uni.beta),
                   view("gate.weight", gate.weight), view("gate.bias", gate.bias),
                   view("refine.weight", refine.weight), view("refine.bias", refine.bias),
                   view("bn_refine.gamma", bn_refine.gamma), view("bn_refine.beta", bn_refine.beta),
                   view("head_hidden.weight", head_hidden.weight), view("head_hidden.bias", head_hidden.bias),
                   view("head_out.weight", head_out.weight), view("head_out.bias", head_out.bias)}) {
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<TensorView> ModelParams::buffers()
{
    return {view("bn_llm.running_mean", bn_llm.running_mean), view("bn_llm.running_var", bn_llm.running_var),
            view("bn_uni.running_mean", bn_uni.running_mean), view("bn_uni.running_var", bn_uni.running_var),
            view("bn_refine.running_mean", bn_refine.running_mean),
            view("bn_refine.running_var", bn_refine.running_var)};
}

std::vector<TensorView> ModelParams::all_tensors()
{
    auto out = trainable();
    for (auto& b : buffers()) {
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<double> forward(const ModelParams& params, const Tensor2& llm, const Tensor2& uni, Mode mode,
                            SplitMix64* rng, ForwardCache* cache)
{
    const auto& cfg = params.config;
    require(llm.rows() > 0, ErrorCode::EmptyInput, "forward: empty batch");
    require(llm.rows() == uni.rows(), ErrorCode::ShapeMismatch, "forward: text and structure batches differ in size");
    require(llm.cols() == cfg.llm_dim, ErrorCode::ShapeMismatch,
            "forward: text embedding dim " + std::to_string(llm.cols()) + ", model expects " +
                std::to_string(cfg.llm_dim));
    require(uni.cols() == cfg.uni_dim, ErrorCode::ShapeMismatch,
            "forward: structure embedding dim " + std::to_string(uni.cols()) + ", model expects " +
                std::to_string(cfg.uni_dim));

    ForwardCache local;
    ForwardCache& c = cache != nullptr ? *cache : local;
    c.mode = mode;
    c.llm_in = llm;
    c.uni_in = uni;

    auto branch = [&](const Tensor2& x, const nd::LinearLayer& proj, const nd::LoraAdapter& lora,
                      const nd::BatchNormState& bn, Tensor2& down, Tensor2& pre, nd::BatchNormCache& bn_cache,
                      const char* name) {
        pre = cfg.use_lora ? nd::lora_forward(x, proj, lora, &down) : nd::linear_forward(x, proj);
        check_finite(pre, name);
        Tensor2 out = nd::batchnorm_forward(nd::gelu(pre), bn, mode, &bn_cache);
        check_finite(out, name);
        return out;
    };
    c.llm_out = branch(llm, params.proj_llm, params.lora_llm, params.bn_llm, c.llm_down, c.llm_pre, c.bn_llm,
                       "text_projection");
    c.uni_out = branch(uni, params.proj_uni, params.lora_uni, params.bn_uni, c.uni_down, c.uni_pre, c.bn_uni,
                       "structure_projection");

    c.fused = nd::gated_fuse(c.llm_out, c.uni_out, params.gate, &c.gate_values);
    check_finite(c.fused, "gated_fusion");

    c.refine_pre = nd::linear_forward(c.fused, params.refine);
    const Tensor2 normed = nd::batchnorm_forward(nd::gelu(c.refine_pre), params.bn_refine, mode, &c.bn_refine);
    const Tensor2 dropped = nd::dropout_forward(normed, cfg.dropout, mode, rng, &c.dropout_mask);
    c.refined = add(c.fused, dropped);
    check_finite(c.refined, "refinement");

    c.head_pre = nd::linear_forward(c.refined, params.head_hidden);
    c.head_act = nd::gelu(c.head_pre);
    const Tensor2 y = nd::linear_forward(c.head_act, params.head_out);
    check_finite(y, "regression_head");
    return {y.data().begin(), y.data().end()};
}

void update_running_stats(ModelParams& params, const ForwardCache& cache)
{
    nd::batchnorm_update_running(params.bn_llm, cache.bn_llm);
    nd::batchnorm_update_running(params.bn_uni, cache.bn_uni);
    nd::batchnorm_update_running(params.bn_refine, cache.bn_refine);
}

ModelParams backward(const ModelParams& params, const ForwardCache& c, std::span<const double> dpred,
                     Tensor2* d_llm, Tensor2* d_uni)
{
    const std::size_t n = c.head_act.rows();
    require(dpred.size() == n, ErrorCode::ShapeMismatch, "backward: gradient length does not match batch");
    const auto& cfg = params.config;
    ModelParams g = ModelParams::zeros(cfg);

    const Tensor2 dy(n, 1, std::vector<double>(dpred.begin(), dpred.end()));
    const Tensor2 d_head_act = nd::linear_backward(c.head_act, dy, params.head_out, g.head_out);
    const Tensor2 d_head_pre = nd::gelu_backward(c.head_pre, d_head_act);
    const Tensor2 d_refined = nd::linear_backward(c.refined, d_head_pre, params.head_hidden, g.head_hidden);

    const Tensor2 d_normed = nd::dropout_backward(d_refined, c.dropout_mask);
    const Tensor2 d_refine_act = nd::batchnorm_backward(c.bn_refine, params.bn_refine, d_normed, g.bn_refine);
    const Tensor2 d_refine_pre = nd::gelu_backward(c.refine_pre, d_refine_act);
    Tensor2 d_fused = d_refined;
    d_fused += nd::linear_backward(c.fused, d_refine_pre, params.refine, g.refine);

    Tensor2 d_llm_out;
    Tensor2 d_uni_out;
    nd::gated_fuse_backward(c.llm_out, c.uni_out, c.gate_values, d_fused, params.gate, g.gate, d_llm_out, d_uni_out);

    auto branch = [&](const Tensor2& d_out, const nd::BatchNormCache& bn_cache, const nd::BatchNormState& bn,
                      nd::BatchNormState& bn_grad, const Tensor2& pre, const Tensor2& x, const Tensor2& down,
                      const nd::LinearLayer& proj, nd::LinearLayer& proj_grad, const nd::LoraAdapter& lora,
                      nd::LoraAdapter& lora_grad) {
        const Tensor2 d_act = nd::batchnorm_backward(bn_cache, bn, d_out, bn_grad);
        const Tensor2 d_pre = nd::gelu_backward(pre, d_act);
        if (cfg.use_lora) {
            return nd::lora_backward(x, down, d_pre, proj, lora, &proj_grad, lora_grad);
        }
        return nd::linear_backward(x, d_pre, proj, proj_grad);
    };
    Tensor2 dx_llm = branch(d_llm_out, c.bn_llm, params.bn_llm, g.bn_llm, c.llm_pre, c.llm_in, c.llm_down,
                            params.proj_llm, g.proj_llm, params.lora_llm, g.lora_llm);
    Tensor2 dx_uni = branch(d_uni_out, c.bn_uni, params.bn_uni, g.bn_uni, c.uni_pre, c.uni_in, c.uni_down,
                            params.proj_uni, g.proj_uni, params.lora_uni, g.lora_uni);
    if (d_llm != nullptr) {
        *d_llm = std::move(dx_llm);
    }
    if (d_uni != nullptr) {
        *d_uni = std::move(dx_uni);
    }
    return g;
}

const char* loss_name(LossKind kind) noexcept
{
    switch (kind) {
    case LossKind::MSE: return "mse";
    case LossKind::MAE: return "mae";
    case LossKind::Huber: return "huber";
    }
    return "unknown";
}

LossKind parse_loss(const std::string& name)
{
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (lower == "mse") {
        return LossKind::MSE;
    }
    if (lower == "mae") {
        return LossKind::MAE;
    }
    if (lower == "huber") {
        return LossKind::Huber;
    }
    fail(ErrorCode::InvalidArgument, "unknown loss '" + name + "' (expected mse, mae or huber)");
}

double loss_value(std::span<const double> predictions, std::span<const double> targets, const LossSpec& loss)
{
    require(!predictions.empty(), ErrorCode::EmptyInput, "loss over an empty batch");
    require(predictions.size() == targets.size(), ErrorCode::ShapeMismatch, "prediction and target counts differ");
    double total = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double r = predictions[i] - targets[i];
        switch (loss.kind) {
        case LossKind::MSE: total += r * r; break;
        case LossKind::MAE: total += std::abs(r); break;
        case LossKind::Huber:
            total += std::abs(r) <= loss.delta ? 0.5 * r * r : loss.delta * (std::abs(r) - 0.5 * loss.delta);
            break;
        }
    }
    return total / static_cast<double>(predictions.size());
}

std::vector<double> loss_gradient(std::span<const double> predictions, std::span<const double> targets,
                                  const LossSpec& loss)
{
    require(!predictions.empty(), ErrorCode::EmptyInput, "loss over an empty batch");
    require(predictions.size() == targets.size(), ErrorCode::ShapeMismatch, "prediction and target counts differ");
    const auto n = static_cast<double>(predictions.size());
    std::vector<double> g(predictions.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double r = predictions[i] - targets[i];
        const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
        switch (loss.kind) {
        case LossKind::MSE: g[i] = 2.0 * r / n; break;
        case LossKind::MAE: g[i] = sign / n; break;
        case LossKind::Huber: g[i] = (std::abs(r) <= loss.delta ? r : loss.delta * sign) / n; break;
        }
    }
    return g;
}

LossAndGrads loss_and_grads(const ModelParams& params, const Tensor2& llm, const Tensor2& uni,
                            std::span<const double> targets, const LossSpec& loss, Mode mode, SplitMix64* rng)
{
    require(llm.rows() > 0, ErrorCode::EmptyInput, "loss_and_grads: empty batch");
    for (double t : targets) {
        require(std::isfinite(t), ErrorCode::NonFinite, "loss_and_grads: non-finite target");
    }
    LossAndGrads out{0.0, {}, {}};
    const auto predictions = forward(params, llm, uni, mode, rng, &out.cache);
    out.loss = loss_value(predictions, targets, loss);
    out.grads = backward(params, out.cache, loss_gradient(predictions, targets, loss));
    return out;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint)
{
    Checkpoint copy = checkpoint;
    const auto& m = copy.meta;
    const json header{{"config", config_to_json(copy.params.config)},
                      {"meta",
                       {{"property", m.property},
                        {"log_scale", m.log_scale},
                        {"target_mean", m.target_mean},
                        {"target_std", m.target_std},
                        {"epoch", m.epoch},
                        {"val_loss", m.val_loss},
                        {"seed", m.seed},
                        {"fold", m.fold}}}};
    const std::string text = header.dump();

    ByteWriter w;
    w.raw(kCheckpointMagic);
    w.u16(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(text.size()));
    w.raw(text);
    auto tensors = copy.params.all_tensors();
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        w.str16(t.name);
        w.u8(static_cast<std::uint8_t>(t.shape.size()));
        for (auto d : t.shape) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        for (double v : t.data) {
            w.f64(v);
        }
    }
    return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    if (r.remaining() < 4) {
        fail(ErrorCode::Truncated, "file shorter than the 4-byte magic");
    }
    const auto magic = r.raw(4);
    if (magic != kCheckpointMagic) {
        fail(ErrorCode::BadMagic, "expected magic PLYM, found '" + magic + "'");
    }
    const auto version = r.u16();
    if (version != kCheckpointVersion) {
        fail(ErrorCode::VersionMismatch, "unsupported checkpoint version " + std::to_string(version));
    }
    const auto text = r.raw(r.u32());
    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("checkpoint header is not valid JSON: ") + e.what());
    }

    Checkpoint cp;
    try {
        cp.params = ModelParams::zeros(config_from_json(header.at("config")));
        const auto& m = header.at("meta");
        cp.meta.property = m.at("property").get<std::string>();
        cp.meta.log_scale = m.at("log_scale").get<bool>();
        cp.meta.target_mean = m.at("target_mean").get<double>();
        cp.meta.target_std = m.at("target_std").get<double>();
        cp.meta.epoch = m.at("epoch").get<std::size_t>();
        cp.meta.val_loss = m.at("val_loss").get<double>();
        cp.meta.seed = m.at("seed").get<std::uint64_t>();
        cp.meta.fold = m.at("fold").get<std::size_t>();
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("checkpoint header is missing fields: ") + e.what());
    }

    auto tensors = cp.params.all_tensors();
    const auto count = r.u32();
    require(count == tensors.size(), ErrorCode::ShapeMismatch,
            "checkpoint holds " + std::to_string(count) + " tensors, config implies " + std::to_string(tensors.size()));
    for (auto& t : tensors) {
        const auto name = r.str16();
        require(name == t.name, ErrorCode::ShapeMismatch, "expected tensor '" + t.name + "', found '" + name + "'");
        const auto rank = r.u8();
        std::vector<std::size_t> dims(rank);
        for (auto& d : dims) {
            d = r.u32();
        }
        require(dims == t.shape, ErrorCode::ShapeMismatch, "tensor '" + name + "' has a shape inconsistent with config");
        for (auto& v : t.data) {
            v = r.f64();
        }
    }
    if (r.remaining() != 0) {
        fail(ErrorCode::TrailingBytes, std::to_string(r.remaining()) + " unexpected bytes after the last tensor");
    }
    return cp;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path)
{
    write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

} // namespace polyllmem::model
