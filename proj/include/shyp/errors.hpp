#pragma once

#include <stdexcept>
#include <string>

namespace shyp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition.
struct PreconditionError : Error {
  using Error::Error;
};

// Point tagged for one space handed to another.
struct SpaceMismatch : Error {
  using Error::Error;
};

// Operation is not defined for this presentation or space kind.
struct Unsupported : Error {
  using Error::Error;
};

// A construction could not be completed; `witness` names the offending input.
struct ConstructionError : Error {
  std::string witness;
  ConstructionError(const std::string& what, std::string w)
      : Error(what + " (witness: " + w + ")"), witness(std::move(w)) {}
};

struct NotFound : Error {
  using Error::Error;
};

}  // namespace shyp
