// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace chatqe {

/// Root of every exception the library throws. The CLI maps each subclass
/// onto an exit code (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record (bad JSON, unknown enum string, missing field).
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed data that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A pipeline precondition failed (missing candidates, misaligned files).
class PipelineError : public Error {
 public:
  using Error::Error;
};

/// Translation backend failure: unreachable endpoint, degenerate output,
/// protocol violation.
class BackendError : public Error {
 public:
  using Error::Error;
};

/// Detector model could not be trained, loaded or applied.
class ModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace chatqe
