// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "polyllmem/polyllmem.h"

#include "polyllmem/attribution.hpp"
#include "polyllmem/binary_io.hpp"
#include "polyllmem/embed_store.hpp"
#include "polyllmem/error.hpp"
#include "polyllmem/model.hpp"
#include "polyllmem/pipeline.hpp"
#include "polyllmem/psmiles.hpp"
#include "polyllmem/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <new>
#include <optional>
#include <sstream>
#include <string>

using json = nlohmann::json;
namespace plm = polyllmem;

struct plm_dataset {
    std::vector<plm::pipeline::PolymerRecord> records;
};

struct plm_embeddings {
    plm::embed::EmbeddingMatrix matrix;
};

struct plm_token_embeddings {
    plm::embed::TokenEmbeddingSet set;
};

struct plm_model {
    plm::model::Checkpoint checkpoint;
};

namespace {

thread_local std::string g_last_error;

plm_status to_status(plm::ErrorCode code) noexcept
{
    using plm::ErrorCode;
    switch (code) {
    case ErrorCode::InvalidArgument: return PLM_INVALID_ARGUMENT;
    case ErrorCode::Io: return PLM_IO;
    case ErrorCode::BadMagic: return PLM_BAD_MAGIC;
    case ErrorCode::VersionMismatch: return PLM_VERSION_MISMATCH;
    case ErrorCode::Truncated: return PLM_TRUNCATED;
    case ErrorCode::TrailingBytes: return PLM_TRAILING_BYTES;
    case ErrorCode::NonFinite: return PLM_NON_FINITE;
    case ErrorCode::ShapeMismatch: return PLM_SHAPE_MISMATCH;
    case ErrorCode::DuplicateId: return PLM_DUPLICATE_ID;
    case ErrorCode::InvalidPsmiles: return PLM_INVALID_PSMILES;
    case ErrorCode::Lexing: return PLM_LEXING;
    case ErrorCode::AlignmentMismatch: return PLM_ALIGNMENT_MISMATCH;
    case ErrorCode::NonpositiveLogInput: return PLM_NONPOSITIVE_LOG_INPUT;
    case ErrorCode::ZeroVariance: return PLM_ZERO_VARIANCE;
    case ErrorCode::ZeroReference: return PLM_ZERO_REFERENCE;
    case ErrorCode::MissingEmbedding: return PLM_MISSING_EMBEDDING;
    case ErrorCode::MissingColumn: return PLM_MISSING_COLUMN;
    case ErrorCode::DegenerateFold: return PLM_DEGENERATE_FOLD;
    case ErrorCode::EmptyInput: return PLM_EMPTY_INPUT;
    case ErrorCode::Singular: return PLM_SINGULAR;
    case ErrorCode::Numerical: return PLM_NUMERICAL;
    }
    return PLM_INTERNAL;
}

template <class F>
plm_status guard(F&& body) noexcept
{
    try {
        body();
        g_last_error.clear();
        return PLM_OK;
    } catch (const plm::Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return PLM_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return PLM_INTERNAL;
    } catch (...) {
        g_last_error = "unknown failure";
        return PLM_INTERNAL;
    }
}

template <class T>
const T& need(const T* p, const char* what)
{
    plm::require(p != nullptr, plm::ErrorCode::InvalidArgument, std::string(what) + " must not be null");
    return *p;
}

const char* need(const char* p, const char* what)
{
    plm::require(p != nullptr, plm::ErrorCode::InvalidArgument, std::string(what) + " must not be null");
    return p;
}

void need_out(const void* p)
{
    plm::require(p != nullptr, plm::ErrorCode::InvalidArgument, "output pointer must not be null");
}

char* dup_string(const std::string& s)
{
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) {
        throw std::bad_alloc();
    }
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void emit(char** out, const std::string& s)
{
    need_out(out);
    *out = dup_string(s);
}

void emit(char** out, const json& j) { emit(out, j.dump(2)); }

json parse(const char* text, const char* what)
{
    plm::require(text != nullptr, plm::ErrorCode::InvalidArgument, std::string(what) + " must not be null");
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        plm::fail(plm::ErrorCode::InvalidArgument, std::string(what) + " is not valid JSON: " + e.what());
    }
}

json meta_json(const plm::embed::EmbeddingMeta& m)
{
    return json{{"modality", plm::embed::modality_name(m.modality)},
                {"dim", m.dim},
                {"source_tag", m.source_tag},
                {"version", m.version}};
}

json merge_map_json(const plm::psmiles::MergeMap& map)
{
    json groups = json::array();
    for (const auto& g : map.groups) {
        json members = json::array();
        for (const auto& m : g.members) {
            members.push_back(json{{"raw_index", m.raw_index}, {"weight", m.weight}});
        }
        groups.push_back(json{{"text", g.text}, {"members", members}});
    }
    return json{{"raw_count", map.raw_count}, {"groups", groups}};
}

std::vector<std::string> string_array(const json& j, const char* what)
{
    plm::require(j.is_array(), plm::ErrorCode::InvalidArgument, std::string(what) + " must be a JSON array");
    std::vector<std::string> out;
    for (const auto& v : j) {
        plm::require(v.is_string(), plm::ErrorCode::InvalidArgument, std::string(what) + " must hold strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

std::vector<std::string> dataset_ids(const plm_dataset& ds)
{
    std::vector<std::string> ids;
    for (const auto& r : ds.records) {
        ids.push_back(r.id);
    }
    return ids;
}

std::vector<std::string> dataset_psmiles(const plm_dataset& ds)
{
    std::vector<std::string> out;
    for (const auto& r : ds.records) {
        out.push_back(r.psmiles);
    }
    return out;
}

plm::train::PropertyData property_data(const plm_dataset* ds, const plm_embeddings* llm, const plm_embeddings* uni,
                                       const char* property)
{
    const auto& d = need(ds, "dataset");
    plm::require(property != nullptr, plm::ErrorCode::InvalidArgument, "property must not be null");
    const auto& l = need(llm, "text embeddings");
    const auto& u = need(uni, "structure embeddings");
    plm::require(l.matrix.meta.modality == plm::embed::Modality::TextLLM, plm::ErrorCode::InvalidArgument,
                 "the text embedding file holds structure embeddings");
    plm::require(u.matrix.meta.modality == plm::embed::Modality::Structure3D, plm::ErrorCode::InvalidArgument,
                 "the structure embedding file holds text embeddings");
    return plm::train::assemble(d.records, l.matrix, u.matrix, property);
}

plm::pipeline::PropertyInfo checkpoint_property(const plm::model::CheckpointMeta& meta)
{
    if (const auto* info = plm::pipeline::PropertyCatalog::standard().find(meta.property)) {
        return *info;
    }
    plm::pipeline::PropertyInfo info;
    info.symbol = meta.property;
    info.log_scale = meta.log_scale;
    return info;
}

std::vector<double> predict_original(const plm::model::Checkpoint& cp, const plm::nd::Tensor2& llm,
                                     const plm::nd::Tensor2& uni)
{
    const auto info = checkpoint_property(cp.meta);
    auto z = plm::model::forward(cp.params, llm, uni, plm::nd::Mode::Eval);
    for (auto& v : z) {
        v = plm::pipeline::inverse_transform(v * cp.meta.target_std + cp.meta.target_mean, info);
    }
    return z;
}

void check_model_inputs(const plm::model::Checkpoint& cp, const plm_embeddings& llm, const plm_embeddings& uni)
{
    plm::require(llm.matrix.meta.dim == cp.params.config.llm_dim && uni.matrix.meta.dim == cp.params.config.uni_dim,
                 plm::ErrorCode::ShapeMismatch,
                 "embedding dims (" + std::to_string(llm.matrix.meta.dim) + ", " +
                     std::to_string(uni.matrix.meta.dim) + ") do not match the checkpoint (" +
                     std::to_string(cp.params.config.llm_dim) + ", " + std::to_string(cp.params.config.uni_dim) +
                     ")");
}

plm::nd::Tensor2 token_matrix(const plm::embed::TokenRecord& r, std::uint32_t dim)
{
    plm::nd::Tensor2 t(r.tokens.size(), dim);
    for (std::size_t i = 0; i < r.values.size(); ++i) {
        t.data()[i] = static_cast<double>(r.values[i]);
    }
    return t;
}

json attribution_json(const plm::attr::Attribution& a)
{
    json j{{"polymer_id", a.polymer_id},
           {"tokens", a.tokens},
           {"scores", a.scores},
           {"output", a.output},
           {"baseline_output", a.baseline_output},
           {"completeness_gap", a.completeness_gap}};
    const double diff = std::abs(a.output - a.baseline_output);
    j["relative_gap"] = diff > 0.0 ? json(a.completeness_gap / diff) : json(nullptr);
    try {
        j["normalized_scores"] = plm::attr::normalize_by_star(a).normalized_scores;
    } catch (const plm::Error& e) {
        j["normalized_scores"] = nullptr;
        j["normalization_error"] = e.what();
    }
    return j;
}

} // namespace

extern "C" {

const char* plm_version(void) { return "0.1.0"; }

const char* plm_last_error(void) { return g_last_error.c_str(); }

const char* plm_status_name(plm_status status)
{
    switch (status) {
    case PLM_OK: return "OK";
    case PLM_INVALID_ARGUMENT: return "INVALID_ARGUMENT";
    case PLM_IO: return "IO";
    case PLM_BAD_MAGIC: return "BAD_MAGIC";
    case PLM_VERSION_MISMATCH: return "VERSION_MISMATCH";
    case PLM_TRUNCATED: return "TRUNCATED";
    case PLM_TRAILING_BYTES: return "TRAILING_BYTES";
    case PLM_NON_FINITE: return "NON_FINITE";
    case PLM_SHAPE_MISMATCH: return "SHAPE_MISMATCH";
    case PLM_DUPLICATE_ID: return "DUPLICATE_ID";
    case PLM_INVALID_PSMILES: return "INVALID_PSMILES";
    case PLM_LEXING: return "LEXING";
    case PLM_ALIGNMENT_MISMATCH: return "ALIGNMENT_MISMATCH";
    case PLM_NONPOSITIVE_LOG_INPUT: return "NONPOSITIVE_LOG_INPUT";
    case PLM_ZERO_VARIANCE: return "ZERO_VARIANCE";
    case PLM_ZERO_REFERENCE: return "ZERO_REFERENCE";
    case PLM_MISSING_EMBEDDING: return "MISSING_EMBEDDING";
    case PLM_MISSING_COLUMN: return "MISSING_COLUMN";
    case PLM_DEGENERATE_FOLD: return "DEGENERATE_FOLD";
    case PLM_EMPTY_INPUT: return "EMPTY_INPUT";
    case PLM_SINGULAR: return "SINGULAR";
    case PLM_NUMERICAL: return "NUMERICAL";
    case PLM_INTERNAL: return "INTERNAL";
    }
    return "UNKNOWN";
}

int plm_exit_code(plm_status status)
{
    switch (status) {
    case PLM_OK: return 0;
    case PLM_INVALID_ARGUMENT: return 1;
    case PLM_SINGULAR:
    case PLM_NUMERICAL:
    case PLM_INTERNAL: return 3;
    default: return 2;
    }
}

void plm_string_free(char* s) { std::free(s); }

plm_status plm_psmiles_cap(const char* psmiles, char** out)
{
    return guard([&] { emit(out, plm::psmiles::cap(need(psmiles, "psmiles"))); });
}

plm_status plm_psmiles_tokenize(const char* psmiles, char** out_json)
{
    return guard([&] {
        json arr = json::array();
        for (const auto& t : plm::psmiles::tokenize(need(psmiles, "psmiles"))) {
            arr.push_back(json{{"text", t.text},
                               {"begin", t.begin},
                               {"end", t.end},
                               {"kind", plm::psmiles::token_kind_name(t.kind)}});
        }
        emit(out_json, arr);
    });
}

plm_status plm_psmiles_validate(const char* psmiles, char** out_json)
{
    return guard([&] {
        json arr = json::array();
        for (const auto& v : plm::psmiles::validate(need(psmiles, "psmiles"))) {
            arr.push_back(json{{"offset", v.offset}, {"message", v.message}});
        }
        emit(out_json, arr);
    });
}

plm_status plm_merge_map(const char* raw_tokens_json, const char* target_tokens_json, char** out_json)
{
    return guard([&] {
        const auto raw = string_array(parse(raw_tokens_json, "raw tokens"), "raw tokens");
        const auto target = string_array(parse(target_tokens_json, "target tokens"), "target tokens");
        emit(out_json, merge_map_json(plm::psmiles::build_merge_map(raw, target)));
    });
}

plm_status plm_dataset_load(const char* path, plm_dataset** out, char** warnings_json)
{
    return guard([&] {
        need_out(out);
        const std::string p = need(path, "path");
        std::ifstream in(p, std::ios::binary);
        plm::require(in.good(), plm::ErrorCode::Io, "cannot open dataset '" + p + "'");
        std::stringstream buffer;
        buffer << in.rdbuf();
        const std::string text = buffer.str();
        const auto first = text.find_first_not_of(" \t\r\n");
        auto ds = std::make_unique<plm_dataset>();
        std::vector<std::string> warnings;
        std::istringstream stream(text);
        if (first != std::string::npos && text[first] == '{') {
            ds->records = plm::pipeline::read_jsonl(stream);
        } else {
            auto loaded = plm::pipeline::parse_csv(stream, plm::pipeline::PropertyCatalog::standard());
            ds->records = std::move(loaded.records);
            warnings = std::move(loaded.warnings);
        }
        if (warnings_json != nullptr) {
            *warnings_json = dup_string(json(warnings).dump());
        }
        *out = ds.release();
    });
}

plm_status plm_dataset_write_jsonl(const plm_dataset* dataset, const char* path)
{
    return guard([&] {
        const std::string p = need(path, "path");
        std::ofstream out(p, std::ios::binary);
        plm::require(out.good(), plm::ErrorCode::Io, "cannot write '" + p + "'");
        plm::pipeline::write_jsonl(need(dataset, "dataset").records, out);
        plm::require(out.good(), plm::ErrorCode::Io, "write to '" + p + "' failed");
    });
}

plm_status plm_dataset_jsonl(const plm_dataset* dataset, char** out)
{
    return guard([&] {
        std::ostringstream s;
        plm::pipeline::write_jsonl(need(dataset, "dataset").records, s);
        emit(out, s.str());
    });
}

plm_status plm_dataset_summary(const plm_dataset* dataset, char** out_json)
{
    return guard([&] {
        const auto& ds = need(dataset, "dataset");
        std::map<std::string, std::vector<double>> by_property;
        for (const auto& r : ds.records) {
            for (const auto& [k, v] : r.values) {
                by_property[k].push_back(v);
            }
        }
        json props = json::object();
        for (const auto& [k, values] : by_property) {
            props[k] = json{{"count", values.size()},
                            {"min", *std::min_element(values.begin(), values.end())},
                            {"max", *std::max_element(values.begin(), values.end())}};
        }
        emit(out_json, json{{"n_records", ds.records.size()}, {"properties", props}});
    });
}

size_t plm_dataset_size(const plm_dataset* dataset) { return dataset == nullptr ? 0 : dataset->records.size(); }

void plm_dataset_free(plm_dataset* dataset) { delete dataset; }

plm_status plm_split(const plm_dataset* dataset, const char* property, uint64_t seed, char** out_json)
{
    return guard([&] {
        const auto& ds = need(dataset, "dataset");
        std::vector<std::string> ids;
        if (property == nullptr) {
            ids = dataset_ids(ds);
        } else {
            static_cast<void>(plm::pipeline::PropertyCatalog::standard().at(property));
            for (const auto* r : plm::pipeline::records_with(ds.records, property)) {
                ids.push_back(r->id);
            }
        }
        const auto plan = plm::pipeline::make_split(ids, seed);
        json folds = json::array();
        for (const auto& f : plan.folds) {
            folds.push_back(f);
        }
        emit(out_json, json{{"seed", plan.seed},
                            {"property", property == nullptr ? json(nullptr) : json(property)},
                            {"n_records", ids.size()},
                            {"train_ids", plan.train_ids},
                            {"test_ids", plan.test_ids},
                            {"folds", folds}});
    });
}

plm_status plm_embeddings_read(const char* path, plm_embeddings** out)
{
    return guard([&] {
        need_out(out);
        auto e = std::make_unique<plm_embeddings>();
        e->matrix = plm::embed::read_matrix(need(path, "path"));
        *out = e.release();
    });
}

plm_status plm_embeddings_write(const plm_embeddings* embeddings, const char* path)
{
    return guard([&] { plm::embed::write_matrix(need(embeddings, "embeddings").matrix, need(path, "path")); });
}

plm_status plm_embeddings_info(const plm_embeddings* embeddings, char** out_json)
{
    return guard([&] {
        const auto& m = need(embeddings, "embeddings").matrix;
        json j = meta_json(m.meta);
        j["kind"] = "pooled";
        j["count"] = m.records.size();
        emit(out_json, j);
    });
}

void plm_embeddings_free(plm_embeddings* embeddings) { delete embeddings; }

plm_status plm_embeddings_synth(const plm_dataset* dataset, plm_modality modality, uint32_t dim, uint64_t seed,
                                uint32_t plant_k, const char* source_tag, plm_embeddings** out)
{
    return guard([&] {
        need_out(out);
        const auto& ds = need(dataset, "dataset");
        plm::require(modality == PLM_MODALITY_TEXT || modality == PLM_MODALITY_STRUCTURE,
                     plm::ErrorCode::InvalidArgument, "unknown modality");
        plm::embed::EmbeddingMeta meta{static_cast<plm::embed::Modality>(modality), dim,
                                       source_tag == nullptr ? "synthetic" : source_tag,
                                       plm::embed::kFormatVersion};
        std::optional<plm::embed::PlantSpec> plant;
        if (plant_k > 0) {
            plant = plm::embed::PlantSpec{static_cast<std::size_t>(plant_k)};
        }
        auto e = std::make_unique<plm_embeddings>();
        e->matrix = plm::embed::synth_embeddings(dataset_ids(ds), dataset_psmiles(ds), meta, seed, plant);
        *out = e.release();
    });
}

plm_status plm_tokens_read(const char* path, plm_token_embeddings** out)
{
    return guard([&] {
        need_out(out);
        auto t = std::make_unique<plm_token_embeddings>();
        t->set = plm::embed::read_tokens(need(path, "path"));
        *out = t.release();
    });
}

plm_status plm_tokens_write(const plm_token_embeddings* tokens, const char* path)
{
    return guard([&] { plm::embed::write_tokens(need(tokens, "token embeddings").set, need(path, "path")); });
}

plm_status plm_tokens_info(const plm_token_embeddings* tokens, char** out_json)
{
    return guard([&] {
        const auto& s = need(tokens, "token embeddings").set;
        std::size_t total = 0;
        for (const auto& r : s.records) {
            total += r.token_count();
        }
        json j = meta_json(s.meta);
        j["kind"] = "tokens";
        j["count"] = s.records.size();
        j["token_count"] = total;
        emit(out_json, j);
    });
}

void plm_tokens_free(plm_token_embeddings* tokens) { delete tokens; }

plm_status plm_tokens_synth(const plm_dataset* dataset, uint32_t dim, uint64_t seed, uint32_t plant_k,
                            const char* source_tag, plm_token_embeddings** out)
{
    return guard([&] {
        need_out(out);
        const auto& ds = need(dataset, "dataset");
        plm::embed::EmbeddingMeta meta{plm::embed::Modality::TextLLM, dim,
                                       source_tag == nullptr ? "synthetic" : source_tag,
                                       plm::embed::kFormatVersion};
        std::optional<plm::embed::PlantSpec> plant;
        if (plant_k > 0) {
            plant = plm::embed::PlantSpec{static_cast<std::size_t>(plant_k)};
        }
        auto t = std::make_unique<plm_token_embeddings>();
        t->set = plm::embed::synth_token_embeddings(dataset_ids(ds), dataset_psmiles(ds), meta, seed, plant);
        *out = t.release();
    });
}

plm_status plm_embed_validate(const char* path, char** out_json)
{
    return guard([&] {
        const auto bytes = plm::read_file(need(path, "path"));
        json j;
        if (plm::embed::detect_kind(bytes) == plm::embed::FileKind::Pooled) {
            const auto m = plm::embed::decode_matrix(bytes);
            j = meta_json(m.meta);
            j["kind"] = "pooled";
            j["count"] = m.records.size();
        } else {
            const auto t = plm::embed::decode_tokens(bytes);
            j = meta_json(t.meta);
            j["kind"] = "tokens";
            j["count"] = t.records.size();
        }
        j["valid"] = true;
        j["bytes"] = bytes.size();
        emit(out_json, j);
    });
}

plm_status plm_train(const plm_dataset* dataset, const plm_embeddings* llm, const plm_embeddings* uni,
                     const char* property, const char* config_json, size_t threads, const char* checkpoint_dir,
                     char** report_json)
{
    return guard([&] {
        need_out(report_json);
        const auto config =
            config_json == nullptr ? plm::train::TrainConfig{} : plm::train::config_from_json(config_json);
        const auto data = property_data(dataset, llm, uni, property);
        plm::train::TrainOptions options;
        options.threads = threads;
        if (checkpoint_dir != nullptr) {
            options.checkpoint_dir = checkpoint_dir;
        }
        emit(report_json, plm::train::report_to_json(plm::train::train_cv(data, config, options)));
    });
}

plm_status plm_gridsearch(const plm_dataset* dataset, const plm_embeddings* llm, const plm_embeddings* uni,
                          const char* property, const char* grid_json, size_t threads, char** result_json)
{
    return guard([&] {
        need_out(result_json);
        const auto grid = grid_json == nullptr ? plm::train::Grid::reference(plm::train::TrainConfig{})
                                               : plm::train::grid_from_json(grid_json);
        const auto data = property_data(dataset, llm, uni, property);
        plm::train::TrainOptions options;
        options.threads = threads;
        emit(result_json, plm::train::grid_result_to_json(plm::train::grid_search(data, grid, options)));
    });
}

plm_status plm_baseline_ridge(const plm_dataset* dataset, const plm_embeddings* llm, const plm_embeddings* uni,
                              const char* property, uint64_t seed, const char* lambdas_json, char** report_json)
{
    return guard([&] {
        need_out(report_json);
        plm::train::RidgeOptions options;
        options.seed = seed;
        if (lambdas_json != nullptr) {
            const json j = parse(lambdas_json, "lambdas");
            try {
                options.lambdas = j.get<std::vector<double>>();
            } catch (const json::exception&) {
                plm::fail(plm::ErrorCode::InvalidArgument, "lambdas must be a JSON array of numbers");
            }
        }
        const auto data = property_data(dataset, llm, uni, property);
        emit(report_json, plm::train::report_to_json(plm::train::ridge_baseline(data, options)));
    });
}

plm_status plm_report_csv(const char* report_json, char** out_csv)
{
    return guard([&] {
        emit(out_csv, plm::train::report_to_csv(plm::train::report_from_json(need(report_json, "report"))));
    });
}

plm_status plm_report_merge(const char* const* report_jsons, size_t count, char** out_csv)
{
    return guard([&] {
        plm::require(count == 0 || report_jsons != nullptr, plm::ErrorCode::InvalidArgument,
                     "report list must not be null");
        std::vector<plm::train::RunReport> reports;
        for (size_t i = 0; i < count; ++i) {
            reports.push_back(plm::train::report_from_json(need(report_jsons[i], "report")));
        }
        emit(out_csv, plm::train::merge_reports_csv(reports));
    });
}

plm_status plm_model_load(const char* path, plm_model** out)
{
    return guard([&] {
        need_out(out);
        auto m = std::make_unique<plm_model>();
        m->checkpoint = plm::model::load_checkpoint(need(path, "path"));
        *out = m.release();
    });
}

plm_status plm_model_info(const plm_model* model, char** out_json)
{
    return guard([&] {
        const auto& cp = need(model, "model").checkpoint;
        const auto& c = cp.params.config;
        const auto& m = cp.meta;
        emit(out_json, json{{"config",
                             {{"llm_dim", c.llm_dim},
                              {"uni_dim", c.uni_dim},
                              {"hidden", c.hidden},
                              {"rank", c.rank},
                              {"alpha", c.alpha},
                              {"dropout", c.dropout},
                              {"use_lora", c.use_lora}}},
                            {"meta",
                             {{"property", m.property},
                              {"log_scale", m.log_scale},
                              {"target_mean", m.target_mean},
                              {"target_std", m.target_std},
                              {"epoch", m.epoch},
                              {"val_loss", m.val_loss},
                              {"seed", m.seed},
                              {"fold", m.fold}}}});
    });
}

void plm_model_free(plm_model* model) { delete model; }

plm_status plm_model_predict(const plm_model* model, const plm_embeddings* llm, const plm_embeddings* uni,
                             char** out_json)
{
    return guard([&] {
        need_out(out_json);
        const auto& cp = need(model, "model").checkpoint;
        const auto& l = need(llm, "text embeddings");
        const auto& u = need(uni, "structure embeddings");
        check_model_inputs(cp, l, u);
        const auto uni_index = u.matrix.index();
        std::vector<std::string> ids;
        for (const auto& r : l.matrix.records) {
            if (uni_index.count(r.id) != 0) {
                ids.push_back(r.id);
            }
        }
        plm::require(!ids.empty(), plm::ErrorCode::EmptyInput, "no id is present in both embedding files");
        const auto pred =
            predict_original(cp, plm::train::gather_rows(l.matrix, ids), plm::train::gather_rows(u.matrix, ids));
        json rows = json::array();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            rows.push_back(json{{"id", ids[i]}, {"prediction", pred[i]}});
        }
        emit(out_json, json{{"property", cp.meta.property}, {"predictions", rows}});
    });
}

plm_status plm_model_evaluate(const plm_model* model, const plm_dataset* dataset, const plm_embeddings* llm,
                              const plm_embeddings* uni, char** out_json)
{
    return guard([&] {
        need_out(out_json);
        const auto& cp = need(model, "model").checkpoint;
        check_model_inputs(cp, need(llm, "text embeddings"), need(uni, "structure embeddings"));
        const auto data = property_data(dataset, llm, uni, cp.meta.property.c_str());
        plm::require(data.ids.size() >= 2, plm::ErrorCode::EmptyInput,
                     "fewer than 2 records carry property " + cp.meta.property);
        const auto info = checkpoint_property(cp.meta);
        const auto pred = predict_original(cp, data.llm, data.uni);
        std::vector<double> y;
        std::vector<double> pred_t;
        for (std::size_t i = 0; i < data.ids.size(); ++i) {
            y.push_back(plm::pipeline::inverse_transform(data.targets[i], info));
            pred_t.push_back(plm::pipeline::transform_target(pred[i], info));
        }
        emit(out_json, json{{"property", cp.meta.property},
                            {"n", data.ids.size()},
                            {"r2", plm::train::r2(data.targets, pred_t)},
                            {"mae", plm::train::mae(data.targets, pred_t)},
                            {"mae_original", plm::train::mae(y, pred)}});
    });
}

plm_status plm_attribute(const plm_model* model, const plm_token_embeddings* tokens, const plm_embeddings* uni,
                         const char* polymer_id, size_t steps, const plm_dataset* merge_dataset, size_t threads,
                         char** out_json)
{
    return guard([&] {
        need_out(out_json);
        const auto& cp = need(model, "model").checkpoint;
        const auto& set = need(tokens, "token embeddings").set;
        const auto& u = need(uni, "structure embeddings").matrix;
        plm::require(set.meta.dim == cp.params.config.llm_dim, plm::ErrorCode::ShapeMismatch,
                     "token embedding dim " + std::to_string(set.meta.dim) + " does not match the checkpoint (" +
                         std::to_string(cp.params.config.llm_dim) + ")");
        std::vector<const plm::embed::TokenRecord*> records;
        if (polymer_id != nullptr) {
            const auto* r = set.find(polymer_id);
            plm::require(r != nullptr, plm::ErrorCode::MissingEmbedding,
                         std::string("no token embeddings for id '") + polymer_id + "'");
            records.push_back(r);
        } else {
            for (const auto& r : set.records) {
                records.push_back(&r);
            }
        }
        std::map<std::string, const plm::pipeline::PolymerRecord*> psmiles_of;
        if (merge_dataset != nullptr) {
            for (const auto& r : merge_dataset->records) {
                psmiles_of.emplace(r.id, &r);
            }
        }
        const auto uni_index = u.index();
        std::vector<json> results(records.size());
        plm::train::parallel_for(records.size(), threads, [&](std::size_t i) {
            const auto& rec = *records[i];
            const auto it = uni_index.find(rec.id);
            if (it == uni_index.end()) {
                plm::fail(plm::ErrorCode::MissingEmbedding, "no structure embedding for id '" + rec.id + "'");
            }
            const auto& fv = u.records[it->second].vector;
            plm::attr::ModelFunction f(cp.params, std::vector<double>(fv.begin(), fv.end()));
            auto a = plm::attr::integrated_gradients(f, token_matrix(rec, set.meta.dim), rec.tokens, steps);
            a.polymer_id = rec.id;
            json j = attribution_json(a);
            if (merge_dataset != nullptr) {
                const auto ps = psmiles_of.find(rec.id);
                if (ps == psmiles_of.end()) {
                    plm::fail(plm::ErrorCode::MissingEmbedding, "no dataset record for id '" + rec.id + "'");
                }
                const auto target = plm::psmiles::token_texts(plm::psmiles::tokenize(ps->second->psmiles));
                const auto merged =
                    plm::attr::merge_attribution(a, plm::psmiles::build_merge_map(rec.tokens, target));
                j["merged"] = attribution_json(merged);
            }
            results[i] = std::move(j);
        });
        emit(out_json, json{{"property", cp.meta.property}, {"steps", steps}, {"attributions", results}});
    });
}

plm_status plm_similarity(const plm_token_embeddings* tokens, const char* polymer_id, double threshold,
                          char** out_json)
{
    return guard([&] {
        need_out(out_json);
        const auto& set = need(tokens, "token embeddings").set;
        plm::require(polymer_id != nullptr, plm::ErrorCode::InvalidArgument, "polymer id must not be null");
        const auto* rec = set.find(polymer_id);
        plm::require(rec != nullptr, plm::ErrorCode::MissingEmbedding,
                     std::string("no token embeddings for id '") + polymer_id + "'");
        const auto sim = plm::attr::cosine_matrix(token_matrix(*rec, set.meta.dim), rec->tokens, threshold);
        json matrix = json::array();
        for (std::size_t i = 0; i < sim.matrix.rows(); ++i) {
            json row = json::array();
            for (double v : sim.matrix.row(i)) {
                row.push_back(std::isnan(v) ? json(nullptr) : json(v));
            }
            matrix.push_back(row);
        }
        json edges = json::array();
        for (const auto& e : sim.edges) {
            edges.push_back(json{{"i", e.i}, {"j", e.j}, {"value", e.value}});
        }
        emit(out_json, json{{"polymer_id", polymer_id},
                            {"tokens", sim.tokens},
                            {"threshold", sim.threshold},
                            {"defined", sim.defined},
                            {"matrix", matrix},
                            {"edges", edges}});
    });
}

plm_status plm_pca(const plm_embeddings* embeddings, size_t k, char** out_json)
{
    return guard([&] {
        need_out(out_json);
        const auto& m = need(embeddings, "embeddings").matrix;
        std::vector<std::string> ids;
        for (const auto& r : m.records) {
            ids.push_back(r.id);
        }
        const auto result = plm::attr::pca_reduce(plm::train::gather_rows(m, ids), k);
        json rows = json::array();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const auto r = result.projected.row(i);
            rows.push_back(json{{"id", ids[i]}, {"values", std::vector<double>(r.begin(), r.end())}});
        }
        emit(out_json, json{{"k", k},
                            {"explained_variance", result.explained_variance},
                            {"explained_ratio", result.explained_ratio},
                            {"rows", rows}});
    });
}

} // extern "C"
