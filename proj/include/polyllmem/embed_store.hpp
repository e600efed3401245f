// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0
//
// Pooled (PLYE) and token-level (PLYT) embedding files.
//
// Header, little-endian, shared by both formats:
//   magic[4] "PLYE"|"PLYT", version u16 = 1, modality u8, reserved u8 = 0,
//   dim u32, count u64, source_tag (u16 length + UTF-8 bytes)
// PLYE record: id (u16 length + bytes), dim x f32
// PLYT record: id (u16 length + bytes), n_tokens u16,
//              n_tokens x (u16 length + bytes), n_tokens x dim x f32

#ifndef POLYLLMEM_EMBED_STORE_HPP
#define POLYLLMEM_EMBED_STORE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace polyllmem::embed {

inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint32_t kTextDim = 4096;
inline constexpr std::uint32_t kStructureDim = 1536;

enum class Modality : std::uint8_t { TextLLM = 0, Structure3D = 1 };

const char* modality_name(Modality m) noexcept;
Modality parse_modality(std::string_view name);

struct EmbeddingMeta {
    Modality modality = Modality::TextLLM;
    std::uint32_t dim = kTextDim;
    std::string source_tag;
    std::uint16_t version = kFormatVersion;
};

struct EmbeddingRecord {
    std::string id;
    std::vector<float> vector;
};

struct EmbeddingMatrix {
    EmbeddingMeta meta;
    std::vector<EmbeddingRecord> records;

    /// id -> row index. Throws DuplicateId.
    [[nodiscard]] std::unordered_map<std::string, std::size_t> index() const;
};

struct TokenRecord {
    std::string id;
    std::vector<std::string> tokens;
    std::vector<float> values;  // tokens.size() x dim, row-major

    [[nodiscard]] std::size_t token_count() const noexcept { return tokens.size(); }
};

struct TokenEmbeddingSet {
    EmbeddingMeta meta;
    std::vector<TokenRecord> records;

    [[nodiscard]] const TokenRecord* find(std::string_view id) const noexcept;
};

/// Throws on any invariant violation (dim, duplicate ids, non-finite values).
void validate(const EmbeddingMatrix& m);
void validate(const TokenEmbeddingSet& t);

std::vector<std::uint8_t> encode(const EmbeddingMatrix& m);
std::vector<std::uint8_t> encode(const TokenEmbeddingSet& t);
EmbeddingMatrix decode_matrix(std::span<const std::uint8_t> bytes);
TokenEmbeddingSet decode_tokens(std::span<const std::uint8_t> bytes);

void write_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix read_matrix(const std::filesystem::path& path);
void write_tokens(const TokenEmbeddingSet& t, const std::filesystem::path& path);
TokenEmbeddingSet read_tokens(const std::filesystem::path& path);

enum class FileKind { Pooled, Tokens };

/// Sniffs the magic; throws BadMagic for anything else.
FileKind detect_kind(std::span<const std::uint8_t> bytes);

/// Arithmetic mean of the token rows, accumulated in double.
std::vector<double> mean_pool(const TokenRecord& record, std::uint32_t dim);

/// Features planted by synth_embeddings, in dimension order.
inline constexpr std::size_t kPlantFeatureCount = 10;
const std::vector<std::string>& plant_feature_names();

/// Raw (unscaled) counts: C, c, F, N, n, O, '=', '#', ring-bond digits,
/// maximum branch depth.
std::vector<double> plant_features(std::string_view psmiles);

struct PlantSpec {
    std::size_t k = kPlantFeatureCount;  // leading features to plant
};

/// Key of the Gaussian stream for one record.
std::uint64_t record_key(std::string_view id, Modality modality, std::uint64_t seed) noexcept;

/// Deterministic standard-normal vectors, one per id. With a PlantSpec, the
/// first k dims are replaced by the planted features divided by their
/// population standard deviation over `psmiles` (left unscaled when the
/// deviation is zero). psmiles may be empty when no plant is requested.
EmbeddingMatrix synth_embeddings(std::span<const std::string> ids, std::span<const std::string> psmiles,
                                 const EmbeddingMeta& meta, std::uint64_t seed,
                                 const std::optional<PlantSpec>& plant = std::nullopt);

/// Token-level variant over psmiles::tokenize. Every token row carries the
/// planted features, so mean pooling preserves them.
TokenEmbeddingSet synth_token_embeddings(std::span<const std::string> ids, std::span<const std::string> psmiles,
                                         const EmbeddingMeta& meta, std::uint64_t seed,
                                         const std::optional<PlantSpec>& plant = std::nullopt);

} // namespace polyllmem::embed

#endif // POLYLLMEM_EMBED_STORE_HPP
