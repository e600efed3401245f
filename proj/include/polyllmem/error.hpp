// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0
//
// Error type shared by every module. Each failure carries a code so the C
// API can map it to a status without parsing messages.

#ifndef POLYLLMEM_ERROR_HPP
#define POLYLLMEM_ERROR_HPP

#include <stdexcept>
#include <string>

namespace polyllmem {

enum class ErrorCode {
    InvalidArgument,
    Io,
    BadMagic,
    VersionMismatch,
    Truncated,
    TrailingBytes,
    NonFinite,
    ShapeMismatch,
    DuplicateId,
    InvalidPsmiles,
    Lexing,
    AlignmentMismatch,
    NonpositiveLogInput,
    ZeroVariance,
    ZeroReference,
    MissingEmbedding,
    MissingColumn,
    DegenerateFold,
    EmptyInput,
    Singular,
    Numerical,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}
    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

inline void require(bool condition, ErrorCode code, const std::string& message)
{
    if (!condition) {
        throw Error(code, message);
    }
}

} // namespace polyllmem

#endif // POLYLLMEM_ERROR_HPP
