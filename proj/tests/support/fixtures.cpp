// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include "polyllmem/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

namespace fixtures {

using polyllmem::SplitMix64;

namespace {

struct Builder {
    SplitMix64 rng;
    std::string out;
    int next_ring = 1;

    explicit Builder(std::uint64_t seed) : rng(seed) {}

    void ring_label(int label)
    {
        if (label < 10) {
            out += static_cast<char>('0' + label);
        } else {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%%%02d", label);
            out += buf;
        }
    }

    void aromatic_ring()
    {
        const int label = next_ring++;
        out += 'c';
        ring_label(label);
        const int hetero = static_cast<int>(rng.below(5));
        for (int i = 0; i < 5; ++i) {
            out += (i == hetero && rng.below(3) == 0) ? 'n' : 'c';
        }
        ring_label(label);
    }

    void atom()
    {
        static const char* const atoms[] = {"C", "C", "C", "N", "O", "S", "Cl", "Br", "[Si]", "[NH]", "c1"};
        const auto pick = rng.below(11);
        if (pick == 10) {
            aromatic_ring();
        } else {
            out += atoms[pick];
        }
    }

    void chain(int depth, int length)
    {
        for (int i = 0; i < length; ++i) {
            if (i > 0) {
                const auto b = rng.below(10);
                out += b == 0 ? "=" : (b == 1 ? "#" : "");
            }
            atom();
            const auto branches = rng.below(depth < 2 ? 3 : 1);
            for (std::uint64_t k = 0; k < branches; ++k) {
                out += '(';
                if (rng.below(3) == 0) {
                    out += rng.below(2) == 0 ? "F" : "=O";
                } else {
                    chain(depth + 1, 1 + static_cast<int>(rng.below(3)));
                }
                out += ')';
            }
        }
    }
};

} // namespace

std::string random_psmiles(std::uint64_t seed)
{
    Builder b(seed);
    b.out = "[*]";
    b.chain(0, 1 + static_cast<int>(b.rng.below(6)));
    b.out += "[*]";
    return b.out;
}

std::vector<std::string> psmiles_corpus(std::size_t n, std::uint64_t seed)
{
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (std::uint64_t i = 0; out.size() < n; ++i) {
        auto s = random_psmiles(polyllmem::derive_seed(seed, i, 0));
        if (seen.insert(s).second) {
            out.push_back(std::move(s));
        }
    }
    return out;
}

PlantedSet planted_set(std::uint64_t seed, const PlantedOptions& options)
{
    using namespace polyllmem;
    PlantedSet set;
    set.psmiles = psmiles_corpus(options.n, derive_seed(seed, "corpus"));
    for (std::size_t i = 0; i < options.n; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "P%05zu", i);
        set.ids.emplace_back(buf);
    }
    embed::EmbeddingMeta llm_meta{embed::Modality::TextLLM, static_cast<std::uint32_t>(options.llm_dim), "synthetic",
                                  embed::kFormatVersion};
    embed::EmbeddingMeta uni_meta{embed::Modality::Structure3D, static_cast<std::uint32_t>(options.uni_dim),
                                  "synthetic", embed::kFormatVersion};
    set.llm = embed::synth_embeddings(set.ids, set.psmiles, llm_meta, seed, embed::PlantSpec{});
    set.uni = embed::synth_embeddings(set.ids, set.psmiles, uni_meta, seed);

    SplitMix64 rng(derive_seed(seed, "target"));
    const std::size_t k = embed::kPlantFeatureCount;
    std::vector<double> w(k);
    for (auto& x : w) {
        x = rng.normal();
    }
    std::vector<double> signal(options.n, 0.0);
    for (std::size_t i = 0; i < options.n; ++i) {
        if (options.pure_noise) {
            signal[i] = rng.normal();
            continue;
        }
        const auto& v = set.llm.records[i].vector;
        for (std::size_t j = 0; j < k; ++j) {
            signal[i] += w[j] * static_cast<double>(v[j]);
        }
    }
    double mean = 0.0;
    for (double s : signal) {
        mean += s;
    }
    mean /= static_cast<double>(options.n);
    double var = 0.0;
    for (double s : signal) {
        var += (s - mean) * (s - mean);
    }
    const double sd = std::sqrt(var / static_cast<double>(options.n));
    const double noise_sd = options.pure_noise ? 0.0 : 1.0 / options.snr;
    for (std::size_t i = 0; i < options.n; ++i) {
        const double z = (signal[i] - mean) / sd + noise_sd * rng.normal();
        set.targets.push_back(options.offset + options.scale * z);
    }

    set.data.property = options.property;
    set.data.info = pipeline::PropertyCatalog::standard().at(options.property);
    set.data.ids = set.ids;
    set.data.targets = set.targets;
    set.data.llm = train::gather_rows(set.llm, set.ids);
    set.data.uni = train::gather_rows(set.uni, set.ids);
    return set;
}

std::string planted_csv(const PlantedSet& set, const std::string& property)
{
    std::ostringstream out;
    out << "id,psmiles," << property << '\n';
    for (std::size_t i = 0; i < set.ids.size(); ++i) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", set.targets[i]);
        out << set.ids[i] << ',' << set.psmiles[i] << ',' << buf << '\n';
    }
    return out.str();
}

polyllmem::model::ModelConfig tiny_config(std::size_t hidden, std::size_t rank)
{
    polyllmem::model::ModelConfig cfg;
    cfg.llm_dim = 6;
    cfg.uni_dim = 5;
    cfg.hidden = hidden;
    cfg.rank = rank;
    cfg.alpha = 4.0;
    cfg.dropout = 0.0;
    return cfg;
}

polyllmem::model::ModelParams random_params(const polyllmem::model::ModelConfig& config, std::uint64_t seed)
{
    auto p = polyllmem::model::ModelParams::initialize(config, seed);
    SplitMix64 rng(polyllmem::derive_seed(seed, "test-params"));
    for (auto* b : {&p.lora_llm.b, &p.lora_uni.b}) {
        for (auto& v : b->data()) {
            v = 0.3 * rng.normal();
        }
    }
    for (auto* bn : {&p.bn_llm, &p.bn_uni, &p.bn_refine}) {
        for (auto& v : bn->gamma) {
            v = 1.0 + 0.2 * rng.normal();
        }
        for (auto& v : bn->beta) {
            v = 0.2 * rng.normal();
        }
        for (auto& v : bn->running_mean) {
            v = 0.2 * rng.normal();
        }
        for (auto& v : bn->running_var) {
            v = 0.5 + rng.uniform();
        }
    }
    for (auto& v : p.gate.bias) {
        v = 0.3 * rng.normal();
    }
    return p;
}

polyllmem::nd::Tensor2 random_rows(std::size_t rows, std::size_t cols, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    polyllmem::nd::Tensor2 t(rows, cols);
    for (auto& v : t.data()) {
        v = rng.normal();
    }
    return t;
}

ModelGradCheck model_grad_check(const polyllmem::model::ModelConfig& config, std::uint64_t seed, std::size_t batch)
{
    using namespace polyllmem;
    auto params = random_params(config, seed);
    const auto llm = random_rows(batch, config.llm_dim, derive_seed(seed, "llm"));
    const auto uni = random_rows(batch, config.uni_dim, derive_seed(seed, "uni"));
    SplitMix64 rng(derive_seed(seed, "targets"));
    std::vector<double> targets(batch);
    for (auto& t : targets) {
        t = rng.normal();
    }
    const model::LossSpec loss{};
    auto lg = model::loss_and_grads(params, llm, uni, targets, loss, nd::Mode::Eval);

    auto views = params.trainable();
    const auto grads = lg.grads.trainable();
    std::vector<double> point;
    std::vector<double> analytic;
    std::vector<std::size_t> owner;
    for (std::size_t t = 0; t < views.size(); ++t) {
        point.insert(point.end(), views[t].data.begin(), views[t].data.end());
        analytic.insert(analytic.end(), grads[t].data.begin(), grads[t].data.end());
        owner.insert(owner.end(), views[t].data.size(), t);
    }
    const auto load = [&](std::span<const double> p) {
        std::size_t k = 0;
        for (auto& v : views) {
            for (auto& x : v.data) {
                x = p[k++];
            }
        }
    };
    const auto f = [&](std::span<const double> p) {
        load(p);
        return model::loss_value(model::forward(params, llm, uni, nd::Mode::Eval), targets, loss);
    };

    ModelGradCheck out;
    out.coordinates = point.size();
    for (std::size_t t = 0; t < views.size(); ++t) {
        // One coordinate block at a time to name the worst tensor.
        std::vector<double> sub_point;
        std::vector<double> sub_grad;
        for (std::size_t k = 0; k < point.size(); ++k) {
            if (owner[k] == t) {
                sub_point.push_back(point[k]);
                sub_grad.push_back(analytic[k]);
            }
        }
        const auto g = [&](std::span<const double> p) {
            std::vector<double> full = point;
            std::size_t j = 0;
            for (std::size_t k = 0; k < full.size(); ++k) {
                if (owner[k] == t) {
                    full[k] = p[j++];
                }
            }
            return f(full);
        };
        const double err = nd::grad_check(g, sub_point, sub_grad);
        if (err > out.max_error || out.worst_tensor.empty()) {
            out.max_error = std::max(out.max_error, err);
            out.worst_tensor = views[t].name;
        }
    }
    load(point);
    return out;
}

namespace {

using polyllmem::nd::Tensor2;

Tensor2 normal_tensor(std::size_t r, std::size_t c, SplitMix64& g, double s = 1.0)
{
    Tensor2 t(r, c);
    for (auto& v : t.data()) {
        v = s * g.normal();
    }
    return t;
}

std::vector<double> normal_vec(std::size_t n, SplitMix64& g, double s = 1.0)
{
    std::vector<double> v(n);
    for (auto& x : v) {
        x = s * g.normal();
    }
    return v;
}

double projected(const Tensor2& y, const Tensor2& r)
{
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        s += y.data()[i] * r.data()[i];
    }
    return s;
}

double slot_error(std::span<double> slot, const std::function<double()>& objective, std::span<const double> analytic)
{
    const std::vector<double> saved(slot.begin(), slot.end());
    const auto f = [&](std::span<const double> p) {
        std::copy(p.begin(), p.end(), slot.begin());
        return objective();
    };
    const double err = polyllmem::nd::grad_check(f, saved, analytic);
    std::copy(saved.begin(), saved.end(), slot.begin());
    return err;
}

} // namespace

double LayerGradCheck::max() const
{
    return std::max({gelu, linear, lora, batchnorm_train, batchnorm_eval, gate});
}

LayerGradCheck layer_grad_check(std::uint64_t seed)
{
    using namespace polyllmem::nd;
    SplitMix64 g(polyllmem::derive_seed(seed, "layers"));
    LayerGradCheck out;

    {
        // Elementwise: each coordinate is differenced through its own term.
        const auto x = normal_tensor(3, 4, g, 2.0);
        const auto r = normal_tensor(3, 4, g);
        const auto dx = gelu_backward(x, r);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double ri = r.data()[i];
            const std::vector<double> point{x.data()[i]};
            const std::vector<double> analytic{dx.data()[i]};
            out.gelu = std::max(out.gelu, grad_check([&](std::span<const double> p) { return gelu(p[0]) * ri; },
                                                     point, analytic));
        }
    }
    {
        LinearLayer l{normal_tensor(3, 5, g), normal_vec(3, g)};
        auto x = normal_tensor(4, 5, g);
        const auto r = normal_tensor(4, 3, g);
        LinearLayer grad = LinearLayer::zeros(3, 5);
        const auto dx = linear_backward(x, r, l, grad);
        const auto obj = [&] { return projected(linear_forward(x, l), r); };
        out.linear = std::max({slot_error(l.weight.data(), obj, grad.weight.data()),
                               slot_error(l.bias, obj, grad.bias), slot_error(x.data(), obj, dx.data())});
    }
    {
        LinearLayer base{normal_tensor(4, 5, g), normal_vec(4, g)};
        auto lora = LoraAdapter::zeros(3, 5, 4, 6.0);
        lora.a = normal_tensor(3, 5, g);
        lora.b = normal_tensor(4, 3, g);
        auto x = normal_tensor(3, 5, g);
        const auto r = normal_tensor(3, 4, g);
        Tensor2 down;
        (void)lora_forward(x, base, lora, &down);
        LinearLayer base_grad = LinearLayer::zeros(4, 5);
        auto lora_grad = LoraAdapter::zeros(3, 5, 4, 6.0);
        const auto dx = lora_backward(x, down, r, base, lora, &base_grad, lora_grad);
        const auto obj = [&] { return projected(lora_forward(x, base, lora), r); };
        out.lora = std::max({slot_error(lora.a.data(), obj, lora_grad.a.data()),
                             slot_error(lora.b.data(), obj, lora_grad.b.data()),
                             slot_error(base.weight.data(), obj, base_grad.weight.data()),
                             slot_error(base.bias, obj, base_grad.bias), slot_error(x.data(), obj, dx.data())});
    }
    for (Mode mode : {Mode::Train, Mode::Eval}) {
        auto s = BatchNormState::identity(3);
        s.gamma = normal_vec(3, g);
        s.beta = normal_vec(3, g);
        s.running_mean = normal_vec(3, g);
        for (auto& v : s.running_var) {
            v = 0.5 + g.uniform();
        }
        auto x = normal_tensor(6, 3, g, 2.0);
        const auto r = normal_tensor(6, 3, g);
        BatchNormCache cache;
        (void)batchnorm_forward(x, s, mode, &cache);
        auto grad = BatchNormState::identity(3);
        std::fill(grad.gamma.begin(), grad.gamma.end(), 0.0);
        std::fill(grad.beta.begin(), grad.beta.end(), 0.0);
        const auto dx = batchnorm_backward(cache, s, r, grad);
        const auto obj = [&] { return projected(batchnorm_forward(x, s, mode), r); };
        const double err = std::max({slot_error(x.data(), obj, dx.data()), slot_error(s.gamma, obj, grad.gamma),
                                     slot_error(s.beta, obj, grad.beta)});
        (mode == Mode::Train ? out.batchnorm_train : out.batchnorm_eval) = err;
    }
    {
        auto u = normal_tensor(3, 4, g);
        auto v = normal_tensor(3, 4, g);
        GateUnit gate{normal_tensor(4, 8, g, 0.5), normal_vec(4, g)};
        const auto r = normal_tensor(3, 4, g);
        Tensor2 gv;
        (void)gated_fuse(u, v, gate, &gv);
        auto grad = GateUnit::zeros(4);
        Tensor2 du;
        Tensor2 dv;
        gated_fuse_backward(u, v, gv, r, gate, grad, du, dv);
        const auto obj = [&] { return projected(gated_fuse(u, v, gate), r); };
        out.gate = std::max({slot_error(u.data(), obj, du.data()), slot_error(v.data(), obj, dv.data()),
                             slot_error(gate.weight.data(), obj, grad.weight.data()),
                             slot_error(gate.bias, obj, grad.bias)});
    }
    return out;
}

} // namespace fixtures

