#pragma once

#include <stdexcept>
#include <string>

namespace ucmnlk {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid state/action indices or otherwise out-of-domain requests.
class DomainError : public Error {
  public:
    using Error::Error;
};

/// Malformed argument values (non-finite vectors, wrong dimensions, ...).
class ArgumentError : public Error {
  public:
    using Error::Error;
};

/// Invalid configuration, unmet preconditions of a construction, malformed
/// input files.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Failure of a numerical routine (Cholesky, bisection).
class NumericalError : public Error {
  public:
    using Error::Error;
};

/// A ground-truth solver could not produce an answer.
class OracleError : public Error {
  public:
    using Error::Error;
};

/// Raised by the diameter computation when some state is not reachable.
class DiameterInfiniteError : public OracleError {
  public:
    using OracleError::OracleError;
};

/// Per-seed result files do not share a snapshot grid.
class AggregationError : public Error {
  public:
    using Error::Error;
};

/**
 * Process exit code associated with an exception.
 *
 * 0 success, 2 configuration error, 3 numerical error, 4 oracle failure or
 * infeasible instance. Anything else maps to 1.
 */
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e) ||
        dynamic_cast<const DomainError*>(&e) || dynamic_cast<const AggregationError*>(&e))
        return 2;
    if (dynamic_cast<const NumericalError*>(&e)) return 3;
    if (dynamic_cast<const OracleError*>(&e)) return 4;
    return 1;
}

} // namespace ucmnlk
