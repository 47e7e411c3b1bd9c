#pragma once

#include <stdexcept>
#include <string>

namespace opn {

// Thrown when tensor or layer shapes are incompatible. Raised before any
// numeric work happens.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or unknown configuration keys/values.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or mismatched file content (magic, version, CRC, truncation).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf encountered where finite values are required.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace opn
