#pragma once

#include <stdexcept>
#include <string>

namespace alsim {

// Bad argument or precondition violation (invalid spec field, empty batch, ...).
struct validation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file; the message carries a 1-based line number where known.
struct parse_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension mismatch between tensors or layers.
struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse, e.g. requesting the heteroscedastic loss on a plain-MSE head.
struct contract_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace alsim
