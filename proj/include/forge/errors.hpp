// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace forge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value violates a type invariant. `field()` names the offending field.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// One or more lines of a line-delimited file failed to parse.
class ParseError : public Error {
public:
    ParseError(std::vector<std::size_t> lines, const std::string& what)
        : Error(what), lines_(std::move(lines)) {}
    const std::vector<std::size_t>& lines() const noexcept { return lines_; }

private:
    std::vector<std::size_t> lines_;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Shape or range precondition of a math routine was not met.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Optimistic-concurrency conflict: the caller must refetch and retry.
class ConflictError : public Error {
public:
    using Error::Error;
};

/// A model adapter failed (endpoint down, malformed response, injected failure).
class AdapterError : public Error {
public:
    using Error::Error;
};

} // namespace forge
