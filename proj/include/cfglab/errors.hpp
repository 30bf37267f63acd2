#pragma once

#include <stdexcept>
#include <string>

namespace cfglab {

// Error categories map 1:1 to CLI exit codes (config 2, numeric 3, io 4).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension mismatches are treated as config-class errors at the CLI boundary.
struct ShapeError : ConfigError {
    explicit ShapeError(const std::string& msg) : ConfigError(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cfglab
