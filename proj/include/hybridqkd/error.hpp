// Copyright 2026 The hybridqkd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hybridqkd {

enum class ErrorCode {
    EmptyState,
    NotSubnormalized,
    DuplicateLabel,
    InvalidLabel,
    MapPartyMismatch,
    MapNotSubnormalized,
    UnmatchedLabel,
    UnresolvedChannel,
    InvalidTable,
    UnsortedInput,
    ZeroCounts,
    FitDiverged,
    InsufficientSpan,
    NoConvergence,
    ParseError,
    UnknownKey,
    InvariantViolation,
    IoError,
    EmptyOutput,
    UsageError,
};

constexpr std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyState: return "EmptyState";
        case ErrorCode::NotSubnormalized: return "NotSubnormalized";
        case ErrorCode::DuplicateLabel: return "DuplicateLabel";
        case ErrorCode::InvalidLabel: return "InvalidLabel";
        case ErrorCode::MapPartyMismatch: return "MapPartyMismatch";
        case ErrorCode::MapNotSubnormalized: return "MapNotSubnormalized";
        case ErrorCode::UnmatchedLabel: return "UnmatchedLabel";
        case ErrorCode::UnresolvedChannel: return "UnresolvedChannel";
        case ErrorCode::InvalidTable: return "InvalidTable";
        case ErrorCode::UnsortedInput: return "UnsortedInput";
        case ErrorCode::ZeroCounts: return "ZeroCounts";
        case ErrorCode::FitDiverged: return "FitDiverged";
        case ErrorCode::InsufficientSpan: return "InsufficientSpan";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::UnknownKey: return "UnknownKey";
        case ErrorCode::InvariantViolation: return "InvariantViolation";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::EmptyOutput: return "EmptyOutput";
        case ErrorCode::UsageError: return "UsageError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI can report it as a single machine-readable line.
class Error : public std::runtime_error {
   public:
    Error(ErrorCode code, const std::string &message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code), message_(message) {
    }

    ErrorCode code() const noexcept {
        return code_;
    }
    const std::string &message() const noexcept {
        return message_;
    }

   private:
    ErrorCode code_;
    std::string message_;
};

}  // namespace hybridqkd
