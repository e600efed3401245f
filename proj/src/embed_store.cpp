// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "polyllmem/embed_store.hpp"
#include "polyllmem/binary_io.hpp"
#include "polyllmem/error.hpp"
#include "polyllmem/psmiles.hpp"
#include "polyllmem/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_set>

namespace polyllmem::embed {

namespace {

constexpr std::string_view kPooledMagic = "PLYE";
constexpr std::string_view kTokenMagic = "PLYT";

void write_header(ByteWriter& w, std::string_view magic, const EmbeddingMeta& meta, std::uint64_t count)
{
    w.raw(magic);
    w.u16(meta.version);
    w.u8(static_cast<std::uint8_t>(meta.modality));
    w.u8(0);
    w.u32(meta.dim);
    w.u64(count);
    w.str16(meta.source_tag);
}

EmbeddingMeta read_header(ByteReader& r, std::string_view magic, std::uint64_t& count)
{
    if (r.remaining() < 4) {
        fail(ErrorCode::Truncated, "file shorter than the 4-byte magic");
    }
    const auto got = r.raw(4);
    if (got != magic) {
        fail(ErrorCode::BadMagic, "expected magic " + std::string(magic) + ", found '" + got + "'");
    }
    EmbeddingMeta meta;
    meta.version = r.u16();
    if (meta.version != kFormatVersion) {
        fail(ErrorCode::VersionMismatch, "unsupported format version " + std::to_string(meta.version));
    }
    const auto modality = r.u8();
    if (modality > 1) {
        fail(ErrorCode::InvalidArgument, "unknown modality code " + std::to_string(modality));
    }
    meta.modality = static_cast<Modality>(modality);
    r.u8();
    meta.dim = r.u32();
    if (meta.dim == 0) {
        fail(ErrorCode::ShapeMismatch, "dim must be positive");
    }
    count = r.u64();
    meta.source_tag = r.str16();
    return meta;
}

void check_finite(std::span<const float> values, std::string_view id)
{
    for (float v : values) {
        if (!std::isfinite(v)) {
            fail(ErrorCode::NonFinite, "non-finite value in record '" + std::string(id) + "'");
        }
    }
}

void read_floats(ByteReader& r, std::vector<float>& out, std::size_t n)
{
    out.resize(n);
    for (auto& v : out) {
        v = r.f32();
    }
}

float round_to_f32(double v) { return static_cast<float>(v); }

std::vector<double> plant_scales(std::span<const std::string> psmiles, std::size_t k,
                                 std::vector<std::vector<double>>& features)
{
    features.clear();
    for (const auto& s : psmiles) {
        features.push_back(plant_features(s));
    }
    std::vector<double> scale(k, 1.0);
    if (features.empty()) {
        return scale;
    }
    const auto n = static_cast<double>(features.size());
    for (std::size_t j = 0; j < k; ++j) {
        double mean = 0.0;
        for (const auto& f : features) {
            mean += f[j];
        }
        mean /= n;
        double var = 0.0;
        for (const auto& f : features) {
            var += (f[j] - mean) * (f[j] - mean);
        }
        var /= n;
        if (var > 0.0) {
            scale[j] = 1.0 / std::sqrt(var);
        }
    }
    return scale;
}

void check_plant(const EmbeddingMeta& meta, std::span<const std::string> ids, std::span<const std::string> psmiles,
                 const std::optional<PlantSpec>& plant)
{
    if (!plant) {
        return;
    }
    require(plant->k <= kPlantFeatureCount, ErrorCode::InvalidArgument,
            "at most " + std::to_string(kPlantFeatureCount) + " features can be planted");
    require(plant->k <= meta.dim, ErrorCode::InvalidArgument, "plant width exceeds embedding dim");
    require(psmiles.size() == ids.size(), ErrorCode::ShapeMismatch, "planting needs one PSMILES per id");
}

void check_unique(std::span<const std::string> ids)
{
    std::unordered_set<std::string_view> seen;
    for (const auto& id : ids) {
        if (!seen.insert(id).second) {
            fail(ErrorCode::DuplicateId, "duplicate id '" + id + "'");
        }
    }
}

} // namespace

const char* modality_name(Modality m) noexcept
{
    return m == Modality::TextLLM ? "text" : "structure";
}

Modality parse_modality(std::string_view name)
{
    if (name == "text" || name == "TextLLM" || name == "llm") {
        return Modality::TextLLM;
    }
    if (name == "structure" || name == "Structure3D" || name == "uni") {
        return Modality::Structure3D;
    }
    fail(ErrorCode::InvalidArgument, "unknown modality '" + std::string(name) + "'");
}

std::unordered_map<std::string, std::size_t> EmbeddingMatrix::index() const
{
    std::unordered_map<std::string, std::size_t> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!out.emplace(records[i].id, i).second) {
            fail(ErrorCode::DuplicateId, "duplicate id '" + records[i].id + "'");
        }
    }
    return out;
}

const TokenRecord* TokenEmbeddingSet::find(std::string_view id) const noexcept
{
    for (const auto& r : records) {
        if (r.id == id) {
            return &r;
        }
    }
    return nullptr;
}

void validate(const EmbeddingMatrix& m)
{
    require(m.meta.dim > 0, ErrorCode::ShapeMismatch, "dim must be positive");
    (void)m.index();
    for (const auto& r : m.records) {
        require(r.vector.size() == m.meta.dim, ErrorCode::ShapeMismatch,
                "record '" + r.id + "' has " + std::to_string(r.vector.size()) + " values, expected " +
                    std::to_string(m.meta.dim));
        check_finite(r.vector, r.id);
    }
}

void validate(const TokenEmbeddingSet& t)
{
    require(t.meta.dim > 0, ErrorCode::ShapeMismatch, "dim must be positive");
    std::unordered_set<std::string_view> seen;
    for (const auto& r : t.records) {
        require(seen.insert(r.id).second, ErrorCode::DuplicateId, "duplicate id '" + r.id + "'");
        require(!r.tokens.empty(), ErrorCode::EmptyInput, "record '" + r.id + "' has no tokens");
        require(r.tokens.size() <= std::numeric_limits<std::uint16_t>::max(), ErrorCode::InvalidArgument,
                "record '" + r.id + "' has too many tokens");
        require(r.values.size() == r.tokens.size() * t.meta.dim, ErrorCode::ShapeMismatch,
                "record '" + r.id + "' value count does not match tokens x dim");
        check_finite(r.values, r.id);
    }
}

std::vector<std::uint8_t> encode(const EmbeddingMatrix& m)
{
    validate(m);
    ByteWriter w;
    write_header(w, kPooledMagic, m.meta, m.records.size());
    for (const auto& r : m.records) {
        w.str16(r.id);
        for (float v : r.vector) {
            w.f32(v);
        }
    }
    return w.take();
}

std::vector<std::uint8_t> encode(const TokenEmbeddingSet& t)
{
    validate(t);
    ByteWriter w;
    write_header(w, kTokenMagic, t.meta, t.records.size());
    for (const auto& r : t.records) {
        w.str16(r.id);
        w.u16(static_cast<std::uint16_t>(r.tokens.size()));
        for (const auto& tok : r.tokens) {
            w.str16(tok);
        }
        for (float v : r.values) {
            w.f32(v);
        }
    }
    return w.take();
}

EmbeddingMatrix decode_matrix(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    std::uint64_t count = 0;
    EmbeddingMatrix m;
    m.meta = read_header(r, kPooledMagic, count);
    // Each record needs at least its id length and payload.
    const std::uint64_t min_record = 2ULL + 4ULL * m.meta.dim;
    if (count > r.remaining() / min_record) {
        fail(ErrorCode::Truncated, "header declares " + std::to_string(count) + " records but only " +
                                       std::to_string(r.remaining()) + " bytes follow");
    }
    m.records.resize(count);
    for (auto& rec : m.records) {
        rec.id = r.str16();
        read_floats(r, rec.vector, m.meta.dim);
        check_finite(rec.vector, rec.id);
    }
    if (r.remaining() != 0) {
        fail(ErrorCode::TrailingBytes, std::to_string(r.remaining()) + " unexpected bytes after the last record");
    }
    (void)m.index();
    return m;
}

TokenEmbeddingSet decode_tokens(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    std::uint64_t count = 0;
    TokenEmbeddingSet t;
    t.meta = read_header(r, kTokenMagic, count);
    if (count > r.remaining() / 4) {
        fail(ErrorCode::Truncated, "header declares more records than the file can hold");
    }
    t.records.resize(count);
    for (auto& rec : t.records) {
        rec.id = r.str16();
        const std::size_t n = r.u16();
        if (n == 0) {
            fail(ErrorCode::EmptyInput, "record '" + rec.id + "' has no tokens");
        }
        rec.tokens.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            rec.tokens.push_back(r.str16());
        }
        if (n * t.meta.dim > r.remaining() / 4) {
            fail(ErrorCode::Truncated, "record '" + rec.id + "' payload is truncated");
        }
        read_floats(r, rec.values, n * t.meta.dim);
        check_finite(rec.values, rec.id);
    }
    if (r.remaining() != 0) {
        fail(ErrorCode::TrailingBytes, std::to_string(r.remaining()) + " unexpected bytes after the last record");
    }
    validate(t);
    return t;
}

void write_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path) { write_file(path, encode(m)); }

EmbeddingMatrix read_matrix(const std::filesystem::path& path) { return decode_matrix(read_file(path)); }

void write_tokens(const TokenEmbeddingSet& t, const std::filesystem::path& path) { write_file(path, encode(t)); }

TokenEmbeddingSet read_tokens(const std::filesystem::path& path) { return decode_tokens(read_file(path)); }

FileKind detect_kind(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 4) {
        fail(ErrorCode::Truncated, "file shorter than the 4-byte magic");
    }
    const std::string_view magic(reinterpret_cast<const char*>(bytes.data()), 4);
    if (magic == kPooledMagic) {
        return FileKind::Pooled;
    }
    if (magic == kTokenMagic) {
        return FileKind::Tokens;
    }
    fail(ErrorCode::BadMagic, "unknown magic '" + std::string(magic) + "'");
}

std::vector<double> mean_pool(const TokenRecord& record, std::uint32_t dim)
{
    const std::size_t n = record.token_count();
    require(n > 0, ErrorCode::EmptyInput, "cannot mean-pool an empty token list");
    require(record.values.size() == n * dim, ErrorCode::ShapeMismatch, "token values do not match tokens x dim");
    std::vector<double> out(dim, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t d = 0; d < dim; ++d) {
            out[d] += static_cast<double>(record.values[t * dim + d]);
        }
    }
    for (auto& v : out) {
        v /= static_cast<double>(n);
    }
    return out;
}

const std::vector<std::string>& plant_feature_names()
{
    static const std::vector<std::string> names{"C", "c", "F", "N", "n", "O", "=", "#", "ring", "branch_depth"};
    return names;
}

std::vector<double> plant_features(std::string_view psmiles)
{
    std::vector<double> f(kPlantFeatureCount, 0.0);
    long depth = 0;
    long max_depth = 0;
    for (const auto& t : psmiles::tokenize(psmiles)) {
        const auto& s = t.text;
        if (s == "C") {
            f[0] += 1;
        } else if (s == "c") {
            f[1] += 1;
        } else if (s == "F") {
            f[2] += 1;
        } else if (s == "N") {
            f[3] += 1;
        } else if (s == "n") {
            f[4] += 1;
        } else if (s == "O") {
            f[5] += 1;
        } else if (s == "=") {
            f[6] += 1;
        } else if (s == "#") {
            f[7] += 1;
        } else if (t.kind == psmiles::TokenKind::RingDigit) {
            f[8] += 1;
        } else if (s == "(") {
            max_depth = std::max(max_depth, ++depth);
        } else if (s == ")") {
            --depth;
        }
    }
    f[9] = static_cast<double>(max_depth);
    return f;
}

std::uint64_t record_key(std::string_view id, Modality modality, std::uint64_t seed) noexcept
{
    return mix64(fnv1a64(id) ^ mix64(seed ^ (static_cast<std::uint64_t>(modality) << 56U)));
}

EmbeddingMatrix synth_embeddings(std::span<const std::string> ids, std::span<const std::string> psmiles,
                                 const EmbeddingMeta& meta, std::uint64_t seed, const std::optional<PlantSpec>& plant)
{
    require(meta.dim > 0, ErrorCode::ShapeMismatch, "dim must be positive");
    check_unique(ids);
    check_plant(meta, ids, psmiles, plant);

    std::vector<std::vector<double>> features;
    std::vector<double> scale;
    if (plant) {
        scale = plant_scales(psmiles, plant->k, features);
    }

    EmbeddingMatrix m;
    m.meta = meta;
    m.records.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        SplitMix64 rng(record_key(ids[i], meta.modality, seed));
        EmbeddingRecord rec{ids[i], std::vector<float>(meta.dim)};
        for (auto& v : rec.vector) {
            v = round_to_f32(rng.normal());
        }
        if (plant) {
            for (std::size_t j = 0; j < plant->k; ++j) {
                rec.vector[j] = round_to_f32(features[i][j] * scale[j]);
            }
        }
        m.records.push_back(std::move(rec));
    }
    return m;
}

TokenEmbeddingSet synth_token_embeddings(std::span<const std::string> ids, std::span<const std::string> psmiles,
                                         const EmbeddingMeta& meta, std::uint64_t seed,
                                         const std::optional<PlantSpec>& plant)
{
    require(meta.dim > 0, ErrorCode::ShapeMismatch, "dim must be positive");
    require(psmiles.size() == ids.size(), ErrorCode::ShapeMismatch, "token synthesis needs one PSMILES per id");
    check_unique(ids);
    check_plant(meta, ids, psmiles, plant);

    std::vector<std::vector<double>> features;
    std::vector<double> scale;
    if (plant) {
        scale = plant_scales(psmiles, plant->k, features);
    }

    TokenEmbeddingSet t;
    t.meta = meta;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        TokenRecord rec;
        rec.id = ids[i];
        rec.tokens = psmiles::token_texts(psmiles::tokenize(psmiles[i]));
        // Distinct stream from the pooled vectors of the same id.
        SplitMix64 rng(derive_seed(record_key(ids[i], meta.modality, seed), "tokens"));
        rec.values.resize(rec.tokens.size() * meta.dim);
        for (auto& v : rec.values) {
            v = round_to_f32(rng.normal());
        }
        if (plant) {
            for (std::size_t tok = 0; tok < rec.tokens.size(); ++tok) {
                for (std::size_t j = 0; j < plant->k; ++j) {
                    rec.values[tok * meta.dim + j] = round_to_f32(features[i][j] * scale[j]);
                }
            }
        }
        t.records.push_back(std::move(rec));
    }
    return t;
}

} // namespace polyllmem::embed
