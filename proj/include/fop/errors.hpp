#pragma once

#include <stdexcept>

namespace fop {

// Violated call contract (shape mismatch, bad argument); a programming error.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Malformed or inconsistent input data. Parse errors carry "path:line:".
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad run configuration (unknown key, unparsable value).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or a failed numeric self-check at run time.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fop
