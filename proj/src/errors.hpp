// Copyright (c) 2026, The coqg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exception hierarchy shared by the core library. The C API maps each class
// onto a status code.

#pragma once

#include <stdexcept>
#include <string>

namespace coqg {

enum class ErrorKind {
    InvalidArgument,
    Dimension,
    Numeric,
    Io,
    Format,
    Invariant,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& what) : Error(ErrorKind::InvalidArgument, what) {}
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& what) : Error(ErrorKind::Dimension, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error(ErrorKind::Format, what) {}
};

// Raised when a contract that must hold at every observable point is broken
// (partition disjointness, frozen-QA hash, ...).
struct InvariantError : Error {
    explicit InvariantError(const std::string& what) : Error(ErrorKind::Invariant, what) {}
};

}  // namespace coqg
