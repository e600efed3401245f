// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "polyllmem/psmiles.hpp"
#include "polyllmem/error.hpp"

#include <algorithm>
#include <map>
#include <optional>

namespace polyllmem::psmiles {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_organic(char c)
{
    switch (c) {
    case 'B': case 'C': case 'N': case 'O': case 'P': case 'S': case 'F': case 'I': return true;
    default: return false;
    }
}

bool is_aromatic(char c)
{
    switch (c) {
    case 'b': case 'c': case 'n': case 'o': case 'p': case 's': return true;
    default: return false;
    }
}

bool is_bond(char c)
{
    switch (c) {
    case '-': case '=': case '#': case '$': case ':': case '/': case '\\': return true;
    default: return false;
    }
}

struct LexFailure {
    std::size_t offset;
    std::string message;
};

// Shared by tokenize() and validate(); returns the first failure instead of throwing.
std::optional<LexFailure> lex(std::string_view s, std::vector<Token>& out)
{
    std::size_t i = 0;
    auto push = [&](std::size_t len, TokenKind kind) {
        out.push_back(Token{std::string(s.substr(i, len)), i, i + len, kind});
        i += len;
    };
    while (i < s.size()) {
        const char c = s[i];
        if (c == '[') {
            const auto close = s.find(']', i + 1);
            if (close == std::string_view::npos) {
                return LexFailure{i, "unterminated bracket atom"};
            }
            const auto open = s.find('[', i + 1);
            if (open != std::string_view::npos && open < close) {
                return LexFailure{open, "nested '[' inside bracket atom"};
            }
            const std::size_t len = close - i + 1;
            if (len == 2) {
                return LexFailure{i, "empty bracket atom"};
            }
            push(len, s.substr(i, len) == kConnectionPoint ? TokenKind::ConnectionPoint : TokenKind::BracketAtom);
        } else if (c == 'C' && i + 1 < s.size() && s[i + 1] == 'l') {
            push(2, TokenKind::Atom);
        } else if (c == 'B' && i + 1 < s.size() && s[i + 1] == 'r') {
            push(2, TokenKind::Atom);
        } else if (is_organic(c)) {
            push(1, TokenKind::Atom);
        } else if (is_aromatic(c)) {
            push(1, TokenKind::AromaticAtom);
        } else if (is_bond(c)) {
            push(1, TokenKind::Bond);
        } else if (c == '(' || c == ')') {
            push(1, TokenKind::Branch);
        } else if (is_digit(c)) {
            push(1, TokenKind::RingDigit);
        } else if (c == '%') {
            if (i + 2 < s.size() && is_digit(s[i + 1]) && is_digit(s[i + 2])) {
                push(3, TokenKind::RingDigit);
            } else {
                return LexFailure{i, "'%' must be followed by two digits"};
            }
        } else {
            return LexFailure{i, std::string("unrecognized character '") + c + "'"};
        }
    }
    return std::nullopt;
}

std::optional<std::size_t> first_invalid_utf8(std::string_view s)
{
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b = static_cast<unsigned char>(s[i]);
        std::size_t len = 0;
        if (b < 0x80U) {
            len = 1;
        } else if ((b & 0xE0U) == 0xC0U && b >= 0xC2U) {
            len = 2;
        } else if ((b & 0xF0U) == 0xE0U) {
            len = 3;
        } else if ((b & 0xF8U) == 0xF0U && b <= 0xF4U) {
            len = 4;
        } else {
            return i;
        }
        if (i + len > s.size()) {
            return i;
        }
        for (std::size_t k = 1; k < len; ++k) {
            if ((static_cast<unsigned char>(s[i + k]) & 0xC0U) != 0x80U) {
                return i;
            }
        }
        i += len;
    }
    return std::nullopt;
}

} // namespace

const char* token_kind_name(TokenKind kind) noexcept
{
    switch (kind) {
    case TokenKind::ConnectionPoint: return "ConnectionPoint";
    case TokenKind::Atom: return "Atom";
    case TokenKind::AromaticAtom: return "AromaticAtom";
    case TokenKind::BracketAtom: return "BracketAtom";
    case TokenKind::Bond: return "Bond";
    case TokenKind::Branch: return "Branch";
    case TokenKind::RingDigit: return "RingDigit";
    }
    return "Unknown";
}

std::vector<Violation> validate(std::string_view s)
{
    std::vector<Violation> out;
    if (auto bad = first_invalid_utf8(s)) {
        out.push_back({*bad, "invalid UTF-8"});
        return out;
    }

    // Structural balance is checked on raw characters so it is reported even
    // when lexing fails.
    long depth = 0;
    std::size_t last_open = 0;
    bool in_bracket = false;
    std::size_t bracket_open = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (c == '[') {
            if (in_bracket) {
                out.push_back({i, "unbalanced bracket: nested '['"});
            }
            in_bracket = true;
            bracket_open = i;
        } else if (c == ']') {
            if (!in_bracket) {
                out.push_back({i, "unbalanced bracket: unexpected ']'"});
            }
            in_bracket = false;
        } else if (!in_bracket && c == '(') {
            ++depth;
            last_open = i;
        } else if (!in_bracket && c == ')') {
            if (depth == 0) {
                out.push_back({i, "unbalanced parenthesis: unexpected ')'"});
            } else {
                --depth;
            }
        }
    }
    if (in_bracket) {
        out.push_back({bracket_open, "unbalanced bracket: missing ']'"});
    }
    if (depth > 0) {
        out.push_back({last_open, "unbalanced parenthesis: missing ')'"});
    }

    std::vector<Token> tokens;
    if (auto failure = lex(s, tokens)) {
        // Bracket balance was already reported by the character scan.
        if (failure->message != "unterminated bracket atom" && failure->message.rfind("nested", 0) != 0) {
            out.push_back({failure->offset, failure->message});
        }
    }

    std::size_t stars = 0;
    std::map<std::string, std::size_t> ring_counts;
    std::map<std::string, std::size_t> ring_first;
    for (const auto& t : tokens) {
        if (t.kind == TokenKind::ConnectionPoint) {
            ++stars;
        } else if (t.kind == TokenKind::RingDigit) {
            if (ring_counts[t.text]++ == 0) {
                ring_first[t.text] = t.begin;
            }
        }
    }
    if (stars != 2) {
        out.push_back({0, "expected exactly 2 connection points, found " + std::to_string(stars)});
    }
    for (const auto& [label, count] : ring_counts) {
        if (count % 2 != 0) {
            out.push_back({ring_first[label], "ring bond " + label + " is not closed"});
        }
    }
    std::sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) { return a.offset < b.offset; });
    return out;
}

std::string cap(std::string_view s)
{
    const auto violations = validate(s);
    if (!violations.empty()) {
        std::string msg = "invalid PSMILES '" + std::string(s) + "':";
        for (const auto& v : violations) {
            msg += " " + v.message + " (byte " + std::to_string(v.offset) + ");";
        }
        fail(ErrorCode::InvalidPsmiles, msg);
    }
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (s.substr(i, kConnectionPoint.size()) == kConnectionPoint) {
            out.push_back('C');
            i += kConnectionPoint.size();
        } else {
            out.push_back(s[i++]);
        }
    }
    return out;
}

std::vector<Token> tokenize(std::string_view s)
{
    std::vector<Token> tokens;
    if (auto failure = lex(s, tokens)) {
        fail(ErrorCode::Lexing, failure->message + " at byte " + std::to_string(failure->offset));
    }
    return tokens;
}

std::string join(std::span<const Token> tokens)
{
    std::string out;
    for (const auto& t : tokens) {
        out += t.text;
    }
    return out;
}

std::vector<std::string> token_texts(std::span<const Token> tokens)
{
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) {
        out.push_back(t.text);
    }
    return out;
}

MergeMap identity_map(std::span<const std::string> raw)
{
    MergeMap map;
    map.raw_count = raw.size();
    for (std::size_t i = 0; i < raw.size(); ++i) {
        map.groups.push_back({raw[i], {{i, 1.0}}});
    }
    return map;
}

MergeMap build_merge_map(std::span<const std::string> raw, std::span<const std::string> target)
{
    std::string raw_text;
    std::string target_text;
    for (const auto& r : raw) {
        require(!r.empty(), ErrorCode::InvalidArgument, "raw tokens must be non-empty");
        raw_text += r;
    }
    for (const auto& t : target) {
        require(!t.empty(), ErrorCode::InvalidArgument, "target tokens must be non-empty");
        target_text += t;
    }
    if (raw_text != target_text) {
        const auto mismatch = std::mismatch(raw_text.begin(), raw_text.end(), target_text.begin(), target_text.end());
        const auto offset = static_cast<std::size_t>(mismatch.first - raw_text.begin());
        fail(ErrorCode::AlignmentMismatch, "raw and target token texts differ at byte " + std::to_string(offset));
    }

    MergeMap map;
    map.raw_count = raw.size();
    std::size_t ri = 0;
    std::size_t raw_begin = 0;  // byte offset of raw[ri]
    std::size_t pos = 0;
    for (const auto& t : target) {
        MergeGroup group{t, {}};
        const std::size_t end = pos + t.size();
        while (pos < end) {
            const std::size_t raw_end = raw_begin + raw[ri].size();
            const std::size_t covered = std::min(end, raw_end) - pos;
            const double weight = covered == raw[ri].size()
                                      ? 1.0
                                      : static_cast<double>(covered) / static_cast<double>(raw[ri].size());
            group.members.push_back({ri, weight});
            pos += covered;
            if (pos == raw_end) {
                raw_begin = raw_end;
                ++ri;
            }
        }
        map.groups.push_back(std::move(group));
    }
    return map;
}

std::vector<std::vector<double>> merge_vectors(const std::vector<std::vector<double>>& vectors, const MergeMap& map)
{
    require(vectors.size() == map.raw_count, ErrorCode::ShapeMismatch,
            "expected " + std::to_string(map.raw_count) + " vectors, got " + std::to_string(vectors.size()));
    const std::size_t dim = vectors.empty() ? 0 : vectors.front().size();
    for (const auto& v : vectors) {
        require(v.size() == dim, ErrorCode::ShapeMismatch, "token vectors have inconsistent dimension");
    }
    std::vector<std::vector<double>> out;
    out.reserve(map.groups.size());
    for (const auto& group : map.groups) {
        std::vector<double> acc(dim, 0.0);
        double total = 0.0;
        for (const auto& m : group.members) {
            for (std::size_t d = 0; d < dim; ++d) {
                acc[d] += m.weight * vectors[m.raw_index][d];
            }
            total += m.weight;
        }
        for (auto& a : acc) {
            a /= total;
        }
        out.push_back(std::move(acc));
    }
    return out;
}

std::vector<double> merge_scores(std::span<const double> scores, const MergeMap& map)
{
    require(scores.size() == map.raw_count, ErrorCode::ShapeMismatch,
            "expected " + std::to_string(map.raw_count) + " scores, got " + std::to_string(scores.size()));
    std::vector<double> out;
    out.reserve(map.groups.size());
    for (const auto& group : map.groups) {
        double acc = 0.0;
        for (const auto& m : group.members) {
            acc += m.weight * scores[m.raw_index];
        }
        out.push_back(acc);
    }
    return out;
}

} // namespace polyllmem::psmiles
