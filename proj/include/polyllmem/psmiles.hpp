// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0
//
// PSMILES handling: validation, capping, atom-level tokenization, and the
// alignment of externally produced subword tokens onto chemical tokens.

#ifndef POLYLLMEM_PSMILES_HPP
#define POLYLLMEM_PSMILES_HPP

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace polyllmem::psmiles {

inline constexpr std::string_view kConnectionPoint = "[*]";

enum class TokenKind { ConnectionPoint, Atom, AromaticAtom, BracketAtom, Bond, Branch, RingDigit };

const char* token_kind_name(TokenKind kind) noexcept;

/// One lexical unit. [begin, end) is a byte range into the source string.
struct Token {
    std::string text;
    std::size_t begin = 0;
    std::size_t end = 0;
    TokenKind kind = TokenKind::Atom;
};

struct Violation {
    std::size_t offset = 0;
    std::string message;
};

/// Every violation of the repeat-unit grammar; empty means valid.
std::vector<Violation> validate(std::string_view s);

/// Replaces each "[*]" with "C". Throws InvalidPsmiles on invalid input.
std::string cap(std::string_view s);

/// Longest-match tokenization. Throws Lexing with the byte offset of the
/// first unrecognized character.
std::vector<Token> tokenize(std::string_view s);

std::string join(std::span<const Token> tokens);

std::vector<std::string> token_texts(std::span<const Token> tokens);

struct MergeMember {
    std::size_t raw_index = 0;
    double weight = 1.0;  // fraction of the raw token's bytes inside this group
};

struct MergeGroup {
    std::string text;
    std::vector<MergeMember> members;
};

/// Alignment of raw tokens onto refined tokens. Each raw token's weights
/// across groups sum to one; groups are in source order.
struct MergeMap {
    std::size_t raw_count = 0;
    std::vector<MergeGroup> groups;
};

MergeMap identity_map(std::span<const std::string> raw);

/// Greedy left-to-right byte alignment. A raw token straddling two targets
/// contributes to both with byte-proportional weights.
MergeMap build_merge_map(std::span<const std::string> raw, std::span<const std::string> target);

/// Weighted mean of member vectors per group.
std::vector<std::vector<double>> merge_vectors(const std::vector<std::vector<double>>& vectors, const MergeMap& map);

/// Weighted sum of member scores per group; preserves the total.
std::vector<double> merge_scores(std::span<const double> scores, const MergeMap& map);

} // namespace polyllmem::psmiles

#endif // POLYLLMEM_PSMILES_HPP
