#pragma once

#include <stdexcept>
#include <string>

namespace pls {

// Malformed call: bad dimensions, invalid parameter range, wrong
// penalty/shape pairing. Maps to CLI exit code 1.
class usage_error : public std::invalid_argument {
public:
    explicit usage_error(const std::string& what) : std::invalid_argument(what) {}
};

// Config file failed validation. Maps to CLI exit code 2.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Iterative routine failed to converge or produced non-finite values.
// Maps to CLI exit code 3.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pls
