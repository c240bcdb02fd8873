#pragma once

#include <stdexcept>
#include <string>

namespace hflight {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input text (YAML, IDX, CSV).
struct ParseError : Error {
    using Error::Error;
};

// Input parsed but does not match the expected schema.
struct SchemaError : Error {
    using Error::Error;
};

// Topology parsed and well-formed but violates the legality rules.
struct LegalityError : Error {
    using Error::Error;
};

// Shape/layout disagreement between parameters, models and data.
struct DimensionError : Error {
    using Error::Error;
};

// A strategy callback contract was not honored (e.g. missing state key).
struct ContractError : Error {
    using Error::Error;
};

// Training produced a non-finite loss; carries the offending step index.
struct DivergenceError : Error {
    DivergenceError(const std::string& msg, std::size_t step)
        : Error(msg), step_index(step) {}
    std::size_t step_index;
};

// Launcher/runtime failures (queue closed, worker process died, ...).
struct RuntimeFault : Error {
    using Error::Error;
};

// Data-plane violations (unknown key, non-adjacent resolve, closed store).
struct DataPlaneError : Error {
    using Error::Error;
};

// Configuration problems detected before a run starts.
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace hflight
