// Copyright (c) 2026, PolyLLMem developers
// SPDX-License-Identifier: Apache-2.0

#include "polyllmem/error.hpp"

namespace polyllmem {

const char* error_code_name(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::TrailingBytes: return "TrailingBytes";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvalidPsmiles: return "InvalidPsmiles";
    case ErrorCode::Lexing: return "Lexing";
    case ErrorCode::AlignmentMismatch: return "AlignmentMismatch";
    case ErrorCode::NonpositiveLogInput: return "NonpositiveLogInput";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::ZeroReference: return "ZeroReference";
    case ErrorCode::MissingEmbedding: return "MissingEmbedding";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::DegenerateFold: return "DegenerateFold";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::Numerical: return "Numerical";
    }
    return "Unknown";
}

} // namespace polyllmem
