#pragma once

#include <stdexcept>
#include <string>

namespace contcl {

// Bad user configuration (CLI exit code 3).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad input data: malformed files, out-of-vocabulary tokens, duplicate ids.
struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed serialized record; carries the 1-based line number.
struct parse_error : input_error {
    parse_error(const std::string& msg, std::size_t line)
        : input_error("line " + std::to_string(line) + ": " + msg), line_number(line) {}
    std::size_t line_number;
};

// API contract violation (shape mismatch, non-scalar backward root, ...).
struct shape_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf encountered where all values must stay finite.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace contcl
