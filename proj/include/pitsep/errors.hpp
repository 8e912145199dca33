#pragma once

#include <stdexcept>
#include <string>

namespace pitsep {

// Invalid argument combinations (bad L/S, shape mismatches on plain data).
struct ParamError : std::runtime_error {
    explicit ParamError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files: WAV headers, checkpoints, manifests.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Inputs that make the requested quantity undefined (all-zero reference etc).
struct DegenerateInputError : std::runtime_error {
    explicit DegenerateInputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Network wiring problems; message names the offending layer.
struct StructuralError : std::runtime_error {
    explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing prerequisites, bad stage wiring, unusable CLI arguments.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite losses or gradients during training.
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pitsep
