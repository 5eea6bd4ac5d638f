#pragma once

#include <stdexcept>
#include <string>

namespace asrl {

// Invalid operand shapes or incompatible layer/model wiring.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// A computation produced NaN/Inf, or was fed non-finite input.
struct NumericsError : std::runtime_error {
    explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration (unknown key, out-of-range value, inconsistent pairing).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File I/O, corrupt checkpoint, malformed PNG/CSV.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace asrl
