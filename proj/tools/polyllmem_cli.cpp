// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end over the C interface.

#include "polyllmem/polyllmem.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using json = nlohmann::json;

namespace {

struct Failure {
    plm_status status;
    std::string message;
};

struct Globals {
    std::uint64_t seed = 42;
    std::size_t threads = 1;
    std::string format = "json";
    bool verbose = false;
    std::string config;
    std::string out;
};

Globals g;
CLI::App* g_app = nullptr;

void log(const std::string& message)
{
    if (g.verbose) {
        std::cerr << "[polyllmem] " << message << '\n';
    }
}

void check(plm_status status, const std::string& context = {})
{
    if (status != PLM_OK) {
        std::string message = plm_last_error();
        if (!context.empty()) {
            message = context + ": " + message;
        }
        throw Failure{status, message};
    }
}

[[noreturn]] void usage(const std::string& message) { throw Failure{PLM_INVALID_ARGUMENT, message}; }

std::string take(char* s)
{
    std::string out = s == nullptr ? std::string() : std::string(s);
    plm_string_free(s);
    return out;
}

std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Failure{PLM_IO, "cannot open '" + path + "'"};
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_output(const std::string& text)
{
    if (g.out.empty()) {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') {
            std::cout << '\n';
        }
        std::cout.flush();
        return;
    }
    std::ofstream out(g.out, std::ios::binary);
    if (!out) {
        throw Failure{PLM_IO, "cannot write '" + g.out + "'"};
    }
    out << text;
    if (!text.empty() && text.back() != '\n') {
        out << '\n';
    }
    if (!out) {
        throw Failure{PLM_IO, "write to '" + g.out + "' failed"};
    }
    log("wrote " + g.out);
}

std::string csv_cell(const json& v)
{
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_null()) {
        return "";
    }
    return v.dump();
}

/// Renders a JSON value according to --format when no dedicated CSV form
/// exists: objects become key/value lines.
std::string render_text(const json& j)
{
    std::ostringstream out;
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) {
            out << k << '\t' << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
        }
    } else {
        out << j.dump(2) << '\n';
    }
    return out.str();
}

template <class T, void (*Free)(T*)>
struct Handle {
    T* ptr = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(ptr); }
    T** out() { return &ptr; }
    [[nodiscard]] const T* get() const { return ptr; }
};

using Dataset = Handle<plm_dataset, plm_dataset_free>;
using Embeddings = Handle<plm_embeddings, plm_embeddings_free>;
using Tokens = Handle<plm_token_embeddings, plm_tokens_free>;
using Model = Handle<plm_model, plm_model_free>;

void load_dataset(Dataset& ds, const std::string& path)
{
    char* warnings = nullptr;
    check(plm_dataset_load(path.c_str(), ds.out(), &warnings), path);
    for (const auto& w : json::parse(take(warnings))) {
        std::cerr << "warning: " << path << ": " << w.get<std::string>() << '\n';
    }
    log("loaded " + std::to_string(plm_dataset_size(ds.get())) + " records from " + path);
}

void load_embeddings(Embeddings& e, const std::string& path)
{
    check(plm_embeddings_read(path.c_str(), e.out()), path);
    log("loaded embeddings " + path);
}

/// Training config: --config file, then an explicit --seed on top.
std::string train_config_json(const std::string& base_json = {})
{
    json cfg = base_json.empty() ? json::object() : json::parse(base_json);
    if (!g.config.empty()) {
        json file;
        try {
            file = json::parse(read_text(g.config));
        } catch (const json::exception& e) {
            usage("config '" + g.config + "' is not valid JSON: " + e.what());
        }
        if (!file.is_object()) {
            usage("config '" + g.config + "' must hold a JSON object");
        }
        cfg.update(file);
    }
    if (g_app->count("--seed") > 0 || !cfg.contains("seed")) {
        cfg["seed"] = g.seed;
    }
    return cfg.dump();
}

std::vector<std::string> read_lines(const std::vector<std::string>& args)
{
    if (!args.empty()) {
        return args;
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(std::cin, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

std::string report_output(const std::string& report_json)
{
    if (g.format == "csv" || g.format == "text") {
        char* csv = nullptr;
        check(plm_report_csv(report_json.c_str(), &csv));
        return take(csv);
    }
    return report_json;
}

struct DataArgs {
    std::string dataset;
    std::string llm;
    std::string uni;
    std::string property;
};

void add_data_args(CLI::App* cmd, DataArgs& a, bool with_property = true)
{
    cmd->add_option("--dataset", a.dataset, "CSV or JSON-lines dataset")->required();
    cmd->add_option("--llm", a.llm, "text embeddings (PLYE)")->required();
    cmd->add_option("--uni", a.uni, "structure embeddings (PLYE)")->required();
    if (with_property) {
        cmd->add_option("--property", a.property, "property symbol, e.g. Tg")->required();
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"PolyLLMem: polymer property prediction from fused text and structure embeddings"};
    g_app = &app;
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--seed", g.seed, "seed for every random stage")->default_val(42);
    app.add_option("--threads", g.threads, "worker threads")->default_val(1)->check(CLI::PositiveNumber);
    app.add_option("--format", g.format, "output format")
        ->default_val("json")
        ->check(CLI::IsMember({"json", "csv", "text"}));
    app.add_flag("--verbose", g.verbose, "log progress to stderr");
    app.add_option("--config", g.config, "JSON training config");
    app.add_option("--out", g.out, "write output here instead of stdout");

    std::function<void()> action;

    std::string ingest_input;
    auto* ingest = app.add_subcommand("ingest", "validate a CSV dataset and emit canonical JSON-lines");
    ingest->add_option("input", ingest_input, "CSV or JSON-lines file")->required();
    ingest->callback([&] {
        action = [&] {
            Dataset ds;
            load_dataset(ds, ingest_input);
            char* text = nullptr;
            check(plm_dataset_jsonl(ds.get(), &text));
            write_output(take(text));
        };
    });

    std::string split_dataset;
    std::string split_property;
    auto* split = app.add_subcommand("split", "85/15 train/test split with five folds");
    split->add_option("--dataset", split_dataset, "dataset file")->required();
    split->add_option("--property", split_property, "restrict to records carrying this property");
    split->callback([&] {
        action = [&] {
            Dataset ds;
            load_dataset(ds, split_dataset);
            char* text = nullptr;
            check(plm_split(ds.get(), split_property.empty() ? nullptr : split_property.c_str(), g.seed, &text));
            write_output(take(text));
        };
    });

    std::vector<std::string> cap_inputs;
    auto* cap = app.add_subcommand("cap", "replace connection points with carbon (stdin, one per line)");
    cap->add_option("psmiles", cap_inputs, "strings to cap instead of stdin");
    cap->callback([&] {
        action = [&] {
            std::string out;
            for (const auto& line : read_lines(cap_inputs)) {
                char* capped = nullptr;
                check(plm_psmiles_cap(line.c_str(), &capped));
                out += take(capped) + '\n';
            }
            write_output(out);
        };
    });

    std::vector<std::string> tok_inputs;
    auto* tokenize = app.add_subcommand("tokenize", "split PSMILES into tokens (stdin, one per line)");
    tokenize->add_option("psmiles", tok_inputs, "strings to tokenize instead of stdin");
    tokenize->callback([&] {
        action = [&] {
            std::string out;
            json all = json::array();
            for (const auto& line : read_lines(tok_inputs)) {
                char* text = nullptr;
                check(plm_psmiles_tokenize(line.c_str(), &text));
                const json tokens = json::parse(take(text));
                if (g.format == "json") {
                    all.push_back(json{{"psmiles", line}, {"tokens", tokens}});
                    continue;
                }
                for (std::size_t i = 0; i < tokens.size(); ++i) {
                    out += (i == 0 ? "" : "\t") + tokens[i]["text"].get<std::string>();
                }
                out += '\n';
            }
            write_output(g.format == "json" ? all.dump(2) : out);
        };
    });

    auto* embed = app.add_subcommand("embed", "embedding file utilities");
    embed->require_subcommand(1);

    std::string synth_dataset;
    std::string synth_modality = "text";
    std::uint32_t synth_dim = 0;
    std::uint32_t synth_plant = 0;
    bool synth_tokens = false;
    std::string synth_tag = "synthetic";
    auto* synth = embed->add_subcommand("synth", "deterministic synthetic embeddings");
    synth->add_option("--dataset", synth_dataset, "dataset file")->required();
    synth->add_option("--modality", synth_modality, "text or structure")
        ->check(CLI::IsMember({"text", "structure"}));
    synth->add_option("--dim", synth_dim, "vector dimension (default 4096 text, 1536 structure)");
    synth->add_option("--plant", synth_plant, "plant this many character-count features (0 = none)");
    synth->add_flag("--tokens", synth_tokens, "emit token-level embeddings (PLYT)");
    synth->add_option("--source-tag", synth_tag, "source tag stored in the header");
    synth->callback([&] {
        action = [&] {
            if (g.out.empty()) {
                usage("embed synth needs --out");
            }
            const bool text = synth_modality == "text";
            const std::uint32_t dim = synth_dim != 0 ? synth_dim : (text ? 4096U : 1536U);
            Dataset ds;
            load_dataset(ds, synth_dataset);
            if (synth_tokens) {
                if (!text) {
                    usage("token-level embeddings are text-only");
                }
                Tokens t;
                check(plm_tokens_synth(ds.get(), dim, g.seed, synth_plant, synth_tag.c_str(), t.out()));
                check(plm_tokens_write(t.get(), g.out.c_str()), g.out);
            } else {
                Embeddings e;
                check(plm_embeddings_synth(ds.get(), text ? PLM_MODALITY_TEXT : PLM_MODALITY_STRUCTURE, dim, g.seed,
                                           synth_plant, synth_tag.c_str(), e.out()));
                check(plm_embeddings_write(e.get(), g.out.c_str()), g.out);
            }
            log("wrote " + g.out);
        };
    });

    std::string validate_path;
    auto* validate = embed->add_subcommand("validate", "check a PLYE or PLYT file");
    validate->add_option("file", validate_path, "embedding file")->required();
    validate->callback([&] {
        action = [&] {
            char* text = nullptr;
            check(plm_embed_validate(validate_path.c_str(), &text), validate_path);
            const std::string s = take(text);
            write_output(g.format == "json" ? s : render_text(json::parse(s)));
        };
    });

    std::string info_path;
    auto* info = embed->add_subcommand("info", "print embedding file metadata");
    info->add_option("file", info_path, "embedding file")->required();
    info->callback([&] {
        action = [&] {
            char* text = nullptr;
            check(plm_embed_validate(info_path.c_str(), &text), info_path);
            json j = json::parse(take(text));
            j.erase("valid");
            write_output(g.format == "json" ? j.dump(2) : render_text(j));
        };
    });

    DataArgs train_args;
    std::string checkpoint_dir;
    auto* train = app.add_subcommand("train", "five-fold cross-validated training");
    add_data_args(train, train_args);
    train->add_option("--checkpoint-dir", checkpoint_dir, "save best weights per fold here");
    train->callback([&] {
        action = [&] {
            Dataset ds;
            Embeddings llm;
            Embeddings uni;
            load_dataset(ds, train_args.dataset);
            load_embeddings(llm, train_args.llm);
            load_embeddings(uni, train_args.uni);
            const auto cfg = train_config_json();
            log("training " + train_args.property + " with " + cfg);
            char* report = nullptr;
            check(plm_train(ds.get(), llm.get(), uni.get(), train_args.property.c_str(), cfg.c_str(), g.threads,
                            checkpoint_dir.empty() ? nullptr : checkpoint_dir.c_str(), &report));
            write_output(report_output(take(report)));
        };
    });

    DataArgs grid_args;
    std::string grid_path;
    auto* grid = app.add_subcommand("gridsearch", "hyperparameter grid search over cross-validated training");
    add_data_args(grid, grid_args);
    grid->add_option("--grid", grid_path, "grid JSON (default: the reference tuning grid)");
    grid->callback([&] {
        action = [&] {
            Dataset ds;
            Embeddings llm;
            Embeddings uni;
            load_dataset(ds, grid_args.dataset);
            load_embeddings(llm, grid_args.llm);
            load_embeddings(uni, grid_args.uni);
            json grid_json = json::object();
            if (!grid_path.empty()) {
                try {
                    grid_json = json::parse(read_text(grid_path));
                } catch (const json::exception& e) {
                    usage("grid '" + grid_path + "' is not valid JSON: " + e.what());
                }
            } else {
                grid_json = {{"batch_size", {8, 64}},      {"hidden", {512, 4096}},    {"rank", {4, 32}},
                             {"alpha", {4, 128}},          {"lr", {5e-5, 1e-4}},       {"weight_decay", {1e-5, 1e-3}},
                             {"dropout", {0.0, 0.5}}};
            }
            grid_json["base"] = json::parse(
                train_config_json(grid_json.contains("base") ? grid_json["base"].dump() : std::string()));
            char* result = nullptr;
            check(plm_gridsearch(ds.get(), llm.get(), uni.get(), grid_args.property.c_str(),
                                 grid_json.dump().c_str(), g.threads, &result));
            write_output(take(result));
        };
    });

    DataArgs eval_args;
    std::string eval_checkpoint;
    auto* evaluate = app.add_subcommand("evaluate", "metrics of a checkpoint on a dataset");
    add_data_args(evaluate, eval_args, false);
    evaluate->add_option("--checkpoint", eval_checkpoint, "PLYM checkpoint")->required();
    evaluate->callback([&] {
        action = [&] {
            Model m;
            Dataset ds;
            Embeddings llm;
            Embeddings uni;
            check(plm_model_load(eval_checkpoint.c_str(), m.out()), eval_checkpoint);
            load_dataset(ds, eval_args.dataset);
            load_embeddings(llm, eval_args.llm);
            load_embeddings(uni, eval_args.uni);
            char* text = nullptr;
            check(plm_model_evaluate(m.get(), ds.get(), llm.get(), uni.get(), &text));
            const std::string s = take(text);
            write_output(g.format == "json" ? s : render_text(json::parse(s)));
        };
    });

    std::string pred_checkpoint;
    std::string pred_llm;
    std::string pred_uni;
    auto* predict = app.add_subcommand("predict", "predict a property from embeddings");
    predict->add_option("--checkpoint", pred_checkpoint, "PLYM checkpoint")->required();
    predict->add_option("--llm", pred_llm, "text embeddings (PLYE)")->required();
    predict->add_option("--uni", pred_uni, "structure embeddings (PLYE)")->required();
    predict->callback([&] {
        action = [&] {
            Model m;
            Embeddings llm;
            Embeddings uni;
            check(plm_model_load(pred_checkpoint.c_str(), m.out()), pred_checkpoint);
            load_embeddings(llm, pred_llm);
            load_embeddings(uni, pred_uni);
            char* text = nullptr;
            check(plm_model_predict(m.get(), llm.get(), uni.get(), &text));
            const json j = json::parse(take(text));
            if (g.format == "json") {
                write_output(j.dump(2));
                return;
            }
            std::string out = "id," + j["property"].get<std::string>() + "\n";
            for (const auto& row : j["predictions"]) {
                out += row["id"].get<std::string>() + "," + row["prediction"].dump() + "\n";
            }
            write_output(out);
        };
    });

    auto* baseline = app.add_subcommand("baseline", "classical baselines");
    baseline->require_subcommand(1);
    DataArgs ridge_args;
    std::vector<double> lambdas;
    auto* ridge = baseline->add_subcommand("ridge", "ridge regression on concatenated embeddings");
    add_data_args(ridge, ridge_args);
    ridge->add_option("--lambdas", lambdas, "penalty ladder")->delimiter(',');
    ridge->callback([&] {
        action = [&] {
            Dataset ds;
            Embeddings llm;
            Embeddings uni;
            load_dataset(ds, ridge_args.dataset);
            load_embeddings(llm, ridge_args.llm);
            load_embeddings(uni, ridge_args.uni);
            const std::string lam = lambdas.empty() ? std::string() : json(lambdas).dump();
            char* report = nullptr;
            check(plm_baseline_ridge(ds.get(), llm.get(), uni.get(), ridge_args.property.c_str(), g.seed,
                                     lam.empty() ? nullptr : lam.c_str(), &report));
            write_output(report_output(take(report)));
        };
    });

    std::string attr_checkpoint;
    std::string attr_tokens;
    std::string attr_uni;
    std::string attr_id;
    std::string attr_dataset;
    std::size_t attr_steps = 64;
    auto* attribute = app.add_subcommand("attribute", "Integrated Gradients token attribution");
    attribute->add_option("--checkpoint", attr_checkpoint, "PLYM checkpoint")->required();
    attribute->add_option("--tokens-file", attr_tokens, "token-level text embeddings (PLYT)")->required();
    attribute->add_option("--uni", attr_uni, "structure embeddings (PLYE)")->required();
    attribute->add_option("--id", attr_id, "single polymer id (default: all)");
    attribute->add_option("--steps", attr_steps, "integration steps")->default_val(64)->check(CLI::PositiveNumber);
    attribute->add_option("--dataset", attr_dataset, "merge scores onto the tokens of each record's PSMILES");
    attribute->callback([&] {
        action = [&] {
            Model m;
            Tokens t;
            Embeddings uni;
            Dataset ds;
            check(plm_model_load(attr_checkpoint.c_str(), m.out()), attr_checkpoint);
            check(plm_tokens_read(attr_tokens.c_str(), t.out()), attr_tokens);
            load_embeddings(uni, attr_uni);
            if (!attr_dataset.empty()) {
                load_dataset(ds, attr_dataset);
            }
            char* text = nullptr;
            check(plm_attribute(m.get(), t.get(), uni.get(), attr_id.empty() ? nullptr : attr_id.c_str(), attr_steps,
                                attr_dataset.empty() ? nullptr : ds.get(), g.threads, &text));
            const json j = json::parse(take(text));
            if (g.format == "json") {
                write_output(j.dump(2));
                return;
            }
            std::string out = "polymer_id,index,token,score,normalized_score\n";
            for (const auto& a : j["attributions"]) {
                for (std::size_t i = 0; i < a["tokens"].size(); ++i) {
                    const auto& norm = a["normalized_scores"];
                    out += csv_cell(a["polymer_id"]) + "," + std::to_string(i) + ",\"" +
                           a["tokens"][i].get<std::string>() + "\"," + a["scores"][i].dump() + "," +
                           (norm.is_null() ? std::string() : norm[i].dump()) + "\n";
                }
            }
            write_output(out);
        };
    });

    std::string sim_tokens;
    std::string sim_id;
    double sim_threshold = 0.5;
    auto* similarity = app.add_subcommand("similarity", "token cosine similarity and edge list");
    similarity->add_option("--tokens-file", sim_tokens, "token-level embeddings (PLYT)")->required();
    similarity->add_option("--id", sim_id, "polymer id")->required();
    similarity->add_option("--threshold", sim_threshold, "edge threshold")->default_val(0.5);
    similarity->callback([&] {
        action = [&] {
            Tokens t;
            check(plm_tokens_read(sim_tokens.c_str(), t.out()), sim_tokens);
            char* text = nullptr;
            check(plm_similarity(t.get(), sim_id.c_str(), sim_threshold, &text));
            const json j = json::parse(take(text));
            if (g.format == "json") {
                write_output(j.dump(2));
                return;
            }
            std::string out = "i,j,token_i,token_j,similarity\n";
            for (const auto& e : j["edges"]) {
                const auto i = e["i"].get<std::size_t>();
                const auto k = e["j"].get<std::size_t>();
                out += std::to_string(i) + "," + std::to_string(k) + ",\"" + j["tokens"][i].get<std::string>() +
                       "\",\"" + j["tokens"][k].get<std::string>() + "\"," + e["value"].dump() + "\n";
            }
            write_output(out);
        };
    });

    std::string pca_path;
    std::size_t pca_k = 100;
    auto* pca = app.add_subcommand("pca", "principal component projection of pooled embeddings");
    pca->add_option("--embeddings", pca_path, "PLYE file")->required();
    pca->add_option("--k", pca_k, "components")->default_val(100)->check(CLI::PositiveNumber);
    pca->callback([&] {
        action = [&] {
            Embeddings e;
            load_embeddings(e, pca_path);
            char* text = nullptr;
            check(plm_pca(e.get(), pca_k, &text));
            const json j = json::parse(take(text));
            if (g.format == "json") {
                write_output(j.dump(2));
                return;
            }
            std::string out = "id";
            for (std::size_t c = 0; c < pca_k; ++c) {
                out += ",pc" + std::to_string(c + 1);
            }
            out += '\n';
            for (const auto& row : j["rows"]) {
                out += row["id"].get<std::string>();
                for (const auto& v : row["values"]) {
                    out += "," + v.dump();
                }
                out += '\n';
            }
            write_output(out);
        };
    });

    std::vector<std::string> report_files;
    auto* report = app.add_subcommand("report", "merge run reports into one CSV table");
    report->add_option("reports", report_files, "RunReport JSON files")->required();
    report->callback([&] {
        action = [&] {
            std::vector<std::string> texts;
            for (const auto& f : report_files) {
                texts.push_back(read_text(f));
            }
            std::vector<const char*> ptrs;
            for (const auto& t : texts) {
                ptrs.push_back(t.c_str());
            }
            char* csv = nullptr;
            check(plm_report_merge(ptrs.data(), ptrs.size(), &csv));
            write_output(take(csv));
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (action) {
            action();
        }
        return 0;
    } catch (const Failure& f) {
        std::cerr << "error [" << plm_status_name(f.status) << "]: " << f.message << '\n';
        return plm_exit_code(f.status);
    } catch (const json::exception& e) {
        std::cerr << "error: malformed JSON: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
