#pragma once

#include <stdexcept>
#include <string>

namespace attnrec {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between tensors (names both shapes in the message).
struct DimensionError : Error {
    using Error::Error;
};

// Bad domain values: degenerate boxes, empty sequences, missing track ids.
struct ValidationError : Error {
    using Error::Error;
};

// Unusable configuration (bad tau, K > D_app, unknown config keys).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed dataset file; carries the 1-based line number.
struct ParseError : Error {
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_number(line) {}
    std::size_t line_number;
};

struct IoError : Error {
    using Error::Error;
};

// Non-finite loss/gradient during optimization; names the offending item.
struct TrainingError : Error {
    using Error::Error;
};

// Checkpoint persistence failures, each a distinct kind.
struct VersionMismatchError : Error {
    using Error::Error;
};
struct ShapeMismatchError : Error {
    using Error::Error;
};
struct TruncatedBlobError : Error {
    using Error::Error;
};

// AP requested for a class with zero positives.
struct UndefinedApError : Error {
    using Error::Error;
};

}  // namespace attnrec
