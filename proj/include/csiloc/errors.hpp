// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace csiloc {

/// Violated precondition on an operation's inputs (bad shape, location outside room, ...).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value or key.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Operation called on an object in the wrong state (e.g. predicting with an unfitted model).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed binary or text input. Carries the byte offset of the first unreadable field.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), detail_(what), offset_(offset)
    {
    }

    std::size_t offset() const noexcept { return offset_; }
    /// Message without the offset suffix.
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string detail_;
    std::size_t offset_;
};

/// Non-finite loss during training.
class TrainingError : public std::runtime_error {
public:
    TrainingError(std::size_t epoch, std::size_t batch, const std::string& what)
        : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch) + ": " + what),
          epoch_(epoch), batch_(batch)
    {
    }

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

} // namespace csiloc
