#ifndef SELFRANK_ERRORS_HPP_
#define SELFRANK_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace selfrank {

// Base for everything thrown by this library. The CLI catches this type and
// turns it into a one-line machine-parseable error.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file (bad JSON line, wrong field types, ...).
struct ParseError : Error {
  using Error::Error;
};

// Input violated a documented precondition (duplicate id, bad template, ...).
struct ValidationError : Error {
  using Error::Error;
};

// Artifact written by a different stage or with an incompatible layout.
struct SchemaError : Error {
  using Error::Error;
};

// Mathematical domain violation (zero-norm vector, tau <= 0, ...).
struct DomainError : Error {
  using Error::Error;
};

// Bad or inconsistent pipeline configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem-level failure, message carries the path.
struct IoError : Error {
  using Error::Error;
};

// Non-finite loss or activation during training.
struct NumericError : Error {
  using Error::Error;
};

// Warning sink for non-fatal conditions (empty answer, degenerate embedder
// input). Writes one line to stderr.
void log_warning(const std::string& message);

}  // namespace selfrank

#endif  // SELFRANK_ERRORS_HPP_
