// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kvunion {

/// Tensor dimensions or grouping parameters do not line up.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input values violate a precondition (non-finite data, malformed sets).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// A query row was left with nothing to attend to.
class DegenerateRowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A table or mask row is missing a block of the current chunk.
class OpenChunkViolation : public std::runtime_error {
public:
    explicit OpenChunkViolation(const std::string& what, std::ptrdiff_t chunk = -1)
        : std::runtime_error(what), chunk_index_(chunk) {}

    /// Chunk index when raised from the prefill engine, -1 otherwise.
    std::ptrdiff_t chunk_index() const noexcept { return chunk_index_; }

private:
    std::ptrdiff_t chunk_index_;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

#define KVUNION_CHECK(cond, ErrType, msg)          \
    do {                                           \
        if (!(cond)) {                             \
            throw ErrType(std::string(msg));       \
        }                                          \
    } while (0)

}  // namespace kvunion
