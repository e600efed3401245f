// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "polyllmem/pipeline.hpp"
#include "polyllmem/error.hpp"
#include "polyllmem/psmiles.hpp"
#include "polyllmem/rng.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace polyllmem::pipeline {

namespace {

std::string fmt_g(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// RFC 4180 field splitting on one physical line (no embedded newlines).
bool split_csv_line(const std::string& line, std::vector<std::string>& fields)
{
    fields.clear();
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(trim(cur));
    return !quoted;
}

bool parse_double(const std::string& s, double& out)
{
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

} // namespace

PropertyCatalog::PropertyCatalog(std::vector<PropertyInfo> properties) : properties_(std::move(properties)) {}

const PropertyCatalog& PropertyCatalog::standard()
{
    static const PropertyCatalog catalog({
        {"Tg", "Glass transition temperature", "C", -1.2e2, 5e2, false, 6769},
        {"Tm", "Melting temperature", "C", -5.5e1, 5.8e2, false, 3349},
        {"Td", "Thermal decomposition temperature", "C", 1.8e1, 8.5e2, false, 5347},
        {"Eat", "Atomization energy", "eV/atom", -7e0, -5e0, false, 390},
        {"Xc", "Crystallization tendency", "%", 1e-1, 1e2, false, 432},
        {"rho", "Density", "g/cm^3", 1e-1, 3e0, false, 1520},
        {"Egc", "Band gap (chain)", "eV", 2e-2, 1e1, false, 3380},
        {"Egb", "Band gap (bulk)", "eV", 4e-1, 1e1, false, 561},
        {"Eea", "Electron affinity", "eV", 4e-1, 5e0, false, 368},
        {"Ei", "Ionization energy", "eV", 3.5e0, 1e1, false, 370},
        {"nc", "Refractive index", "-", 1e0, 3e0, false, 382},
        {"sigma", "Conductivity", "S/cm", 0e0, 1e7, true, 382},
        {"E", "Young's modulus", "GPa", 2e-5, 6e0, true, 938},
        {"sigma_y", "Tensile strength at yield", "GPa", 3e-8, 4e-1, true, 244},
        {"sigma_b", "Tensile strength at break", "GPa", 8e-5, 2e-1, true, 975},
        {"eps_b", "Elongation at break", "-", 6e-1, 1e3, true, 1015},
        {"mu_O2", "O2 gas permeability", "barrer", 3e-4, 1.9e4, true, 695},
        {"mu_CO2", "CO2 gas permeability", "barrer", 1e-3, 4.7e4, true, 644},
        {"mu_N2", "N2 gas permeability", "barrer", 1e-4, 1.7e4, true, 678},
        {"mu_H2", "H2 gas permeability", "barrer", 2e-2, 3.7e4, true, 461},
        {"mu_He", "He gas permeability", "barrer", 5e-2, 1.8e4, true, 408},
        {"mu_CH4", "CH4 gas permeability", "barrer", 4e-4, 3.5e4, true, 331},
    });
    return catalog;
}

const PropertyInfo* PropertyCatalog::find(std::string_view symbol) const noexcept
{
    for (const auto& p : properties_) {
        if (p.symbol == symbol) {
            return &p;
        }
    }
    return nullptr;
}

const PropertyInfo& PropertyCatalog::at(std::string_view symbol) const
{
    const auto* p = find(symbol);
    if (p == nullptr) {
        fail(ErrorCode::InvalidArgument, "unknown property '" + std::string(symbol) + "'");
    }
    return *p;
}

LoadResult parse_csv(std::istream& in, const PropertyCatalog& catalog)
{
    LoadResult result;
    std::string line;
    std::vector<std::string> header;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            break;
        }
    }
    if (!split_csv_line(line, header) || trim(line).empty()) {
        fail(ErrorCode::MissingColumn, "CSV has no header row");
    }

    std::ptrdiff_t psmiles_col = -1;
    std::ptrdiff_t id_col = -1;
    std::vector<const PropertyInfo*> column_property(header.size(), nullptr);
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "psmiles") {
            psmiles_col = static_cast<std::ptrdiff_t>(c);
        } else if (header[c] == "id") {
            id_col = static_cast<std::ptrdiff_t>(c);
        } else if (const auto* p = catalog.find(header[c])) {
            column_property[c] = p;
        } else {
            result.warnings.push_back("line " + std::to_string(line_no) + ": ignoring unknown column '" + header[c] + "'");
        }
    }
    if (psmiles_col < 0) {
        fail(ErrorCode::MissingColumn, "CSV header has no 'psmiles' column");
    }

    std::unordered_set<std::string> seen;
    std::vector<std::string> fields;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (!split_csv_line(line, fields)) {
            result.warnings.push_back(where + "unterminated quote; row skipped");
            continue;
        }
        if (fields.size() != header.size()) {
            result.warnings.push_back(where + "expected " + std::to_string(header.size()) + " fields, found " +
                                      std::to_string(fields.size()) + "; row skipped");
            continue;
        }
        PolymerRecord rec;
        rec.psmiles = fields[static_cast<std::size_t>(psmiles_col)];
        rec.id = id_col >= 0 ? fields[static_cast<std::size_t>(id_col)] : rec.psmiles;
        if (rec.id.empty()) {
            result.warnings.push_back(where + "empty id; row skipped");
            continue;
        }
        const auto violations = psmiles::validate(rec.psmiles);
        if (!violations.empty()) {
            result.warnings.push_back(where + "invalid PSMILES '" + rec.psmiles + "': " + violations.front().message +
                                      "; row skipped");
            continue;
        }
        bool ok = true;
        for (std::size_t c = 0; c < fields.size() && ok; ++c) {
            const auto* prop = column_property[c];
            if (prop == nullptr || fields[c].empty()) {
                continue;
            }
            double v = 0.0;
            if (!parse_double(fields[c], v)) {
                result.warnings.push_back(where + "cannot parse " + prop->symbol + " value '" + fields[c] +
                                          "'; row skipped");
                ok = false;
                break;
            }
            if (v < prop->min || v > prop->max) {
                result.warnings.push_back(where + prop->symbol + "=" + fmt_g(v) + " outside [" + fmt_g(prop->min) +
                                          ", " + fmt_g(prop->max) + "]");
            }
            rec.values[prop->symbol] = v;
        }
        if (!ok) {
            continue;
        }
        if (!seen.insert(rec.id).second) {
            fail(ErrorCode::DuplicateId, where + "duplicate id '" + rec.id + "'");
        }
        result.records.push_back(std::move(rec));
    }
    return result;
}

LoadResult load_csv(const std::filesystem::path& path, const PropertyCatalog& catalog)
{
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::Io, "cannot open " + path.string());
    }
    return parse_csv(in, catalog);
}

void write_jsonl(std::span<const PolymerRecord> records, std::ostream& out)
{
    for (const auto& r : records) {
        nlohmann::json values = nlohmann::json::object();
        for (const auto& [k, v] : r.values) {
            values[k] = v;
        }
        out << nlohmann::json{{"id", r.id}, {"psmiles", r.psmiles}, {"values", values}}.dump() << '\n';
    }
}

std::vector<PolymerRecord> read_jsonl(std::istream& in)
{
    std::vector<PolymerRecord> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        PolymerRecord rec;
        try {
            const auto j = nlohmann::json::parse(line);
            rec.id = j.at("id").get<std::string>();
            rec.psmiles = j.at("psmiles").get<std::string>();
            for (const auto& [k, v] : j.at("values").items()) {
                rec.values[k] = v.get<double>();
            }
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen.insert(rec.id).second) {
            fail(ErrorCode::DuplicateId, "line " + std::to_string(line_no) + ": duplicate id '" + rec.id + "'");
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<PolymerRecord> load_jsonl(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::Io, "cannot open " + path.string());
    }
    return read_jsonl(in);
}

double transform_target(double value, const PropertyInfo& property)
{
    if (!property.log_scale) {
        return value;
    }
    if (!(value > 0.0)) {
        fail(ErrorCode::NonpositiveLogInput,
             property.symbol + " is log-scaled and needs a positive value, got " + fmt_g(value));
    }
    return std::log10(value);
}

double inverse_transform(double value, const PropertyInfo& property)
{
    return property.log_scale ? std::pow(10.0, value) : value;
}

Standardizer Standardizer::fit(std::span<const double> values)
{
    require(values.size() >= 2, ErrorCode::ZeroVariance, "standardization needs at least 2 values");
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) {
        var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(values.size());
    require(var > 0.0, ErrorCode::ZeroVariance, "targets have zero variance");
    return {mean, std::sqrt(var)};
}

SplitPlan make_split(std::span<const std::string> ids, std::uint64_t seed)
{
    const std::size_t n = ids.size();
    require(n >= 10, ErrorCode::DegenerateFold,
            "need at least 10 records for a test set and 5 folds, got " + std::to_string(n));
    std::unordered_set<std::string_view> seen;
    for (const auto& id : ids) {
        require(seen.insert(id).second, ErrorCode::DuplicateId, "duplicate id '" + id + "'");
    }

    std::vector<std::string> order(ids.begin(), ids.end());
    SplitMix64 rng(derive_seed(seed, "split"));
    for (std::size_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i + 1));
        std::swap(order[i], order[j]);
    }

    SplitPlan plan;
    plan.seed = seed;
    // round(0.15 n), half away from zero, in exact integer arithmetic.
    const std::size_t n_test = (15 * n + 50) / 100;
    plan.test_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    plan.train_ids.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    for (std::size_t i = 0; i < plan.train_ids.size(); ++i) {
        plan.folds[i % kFolds].push_back(plan.train_ids[i]);
    }
    return plan;
}

std::vector<const PolymerRecord*> records_with(std::span<const PolymerRecord> records, std::string_view property)
{
    std::vector<const PolymerRecord*> out;
    for (const auto& r : records) {
        if (r.values.count(std::string(property)) != 0) {
            out.push_back(&r);
        }
    }
    return out;
}

} // namespace polyllmem::pipeline
