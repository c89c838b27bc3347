#pragma once

#include <stdexcept>
#include <string>

namespace twinbeam {

// All library failures derive from Error so callers can catch broadly;
// the CLI maps ConfigError -> exit 1 and NumericalError (and subclasses) -> exit 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidParameter : Error { using Error::Error; };
struct OutOfRange : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

struct NumericalError : Error { using Error::Error; };
struct InconsistentPropagator : NumericalError { using NumericalError::NumericalError; };
struct CalibrationError : NumericalError { using NumericalError::NumericalError; };
struct PairingError : NumericalError { using NumericalError::NumericalError; };
struct NonPhysicalState : NumericalError { using NumericalError::NumericalError; };
struct UndefinedSchmidtNumber : NumericalError { using NumericalError::NumericalError; };

} // namespace twinbeam
