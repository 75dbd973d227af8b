#pragma once

#include <stdexcept>
#include <string>

namespace mtda {

// Error taxonomy used across the library. The CLI maps these onto exit
// codes: ConfigError -> 2, NumericError -> 3, FormatError -> 4.

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed external artifact (IDX stream, checkpoint file, ...).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss or divergent training run.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mtda
