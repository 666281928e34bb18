#pragma once

#include <stdexcept>
#include <string>

namespace canontab {

// Base class for all engine errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (CSV, markdown, JSON documents).
class ParseError : public Error {
public:
    using Error::Error;
};

// A plan failed schema or policy validation.
class ValidationError : public Error {
public:
    using Error::Error;
};

// A step failed while executing against a concrete table.
class ExecutionError : public Error {
public:
    ExecutionError(const std::string& msg, std::string step_id = {}, long row = -1)
        : Error(msg), step_id(std::move(step_id)), row_index(row) {}

    std::string step_id;
    long row_index;  // -1 when not row-specific
};

// Cache integrity failure (content hash mismatch, missing artifact).
class CacheError : public Error {
public:
    using Error::Error;
};

}  // namespace canontab
