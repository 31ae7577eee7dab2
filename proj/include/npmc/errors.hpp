#pragma once

#include <stdexcept>
#include <string>

namespace npmc {

// Shape / precondition violations on numeric operations.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Violated call contract (bad arguments, degenerate inputs).
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed on-disk data; message carries the byte offset or line number.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structural limit reached (e.g. block cap).
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid user-facing configuration; maps to exit code 2 in the CLI.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace npmc
