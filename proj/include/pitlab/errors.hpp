#pragma once

#include <stdexcept>
#include <string>

namespace pitlab {

// Malformed input document (bad JSON, bad JSONL line).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Well-formed document that violates an invariant (duplicate tool name,
// out-of-order trace sequence, incomplete objective config).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Library misuse (even trial counts, negative LOC deltas).
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pitlab
