#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sage {

// Invalid specs, mismatched dimensions, bad hyper-parameter ranges.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf produced during a forward pass; carries the offending layer.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& msg, int layer)
        : std::runtime_error(msg), layer_index(layer) {}
    int layer_index;
};

// Non-finite parameter after an optimizer step.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& msg, long step, std::size_t index)
        : std::runtime_error(msg), step(step), index(index) {}
    long step;
    std::size_t index;
};

// Malformed CSV or missing input files; line 0 means "not line specific".
class IngestionError : public std::runtime_error {
public:
    IngestionError(const std::string& msg, std::size_t line = 0)
        : std::runtime_error(msg), line(line) {}
    std::size_t line;
};

}  // namespace sage
