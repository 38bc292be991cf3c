// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dblp {

/// Invalid configuration value. `path()` names the offending field as a dotted key path.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& message)
        : std::runtime_error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation (division by zero, empty histogram, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A training or evaluation stage could not complete (divergence, missing artifact, failed precondition).
class StageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotFoundError : public StageError {
public:
    using StageError::StageError;
};

}  // namespace dblp
