#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ssmi {

// Error taxonomy. Each class maps to one CLI exit code (see commands.hpp).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between tensor operands.
struct DimensionError : Error {
    using Error::Error;
};

// Violated API precondition (bad argument range, non-scalar backward, ...).
struct ContractError : Error {
    using Error::Error;
};

// Out-of-range token id or index.
struct IndexError : Error {
    using Error::Error;
};

// Spectral radius >= 1 where a convergent series is required.
struct StabilityError : Error {
    using Error::Error;
};

// Divergence during an optimization loop; carries the failing step.
struct TrainingError : Error {
    std::size_t step;
    TrainingError(std::size_t at, const std::string& what)
        : Error("step " + std::to_string(at) + ": " + what), step(at) {}
};

// Malformed binary container; carries the byte offset of the failing check.
struct FormatError : Error {
    std::size_t offset;
    FormatError(std::size_t at, const std::string& what)
        : Error("offset " + std::to_string(at) + ": " + what), offset(at) {}
};

// Malformed config file or missing/unknown field.
struct ParseError : Error {
    using Error::Error;
};

// Checkpoint/config disagreement; message lists the differing fields.
struct CompatibilityError : Error {
    using Error::Error;
};

}  // namespace ssmi
