#pragma once

#include <stdexcept>
#include <string>

namespace progrow {

// Root of every error the library raises. Subclasses name the failure class
// so callers (and the CLI exit-code mapping) can tell them apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A scalar argument is outside its documented domain (k = 0, p >= 1, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A class or token index is out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied data (sequences, masks, batches) is malformed.
class InputError : public Error {
 public:
  using Error::Error;
};

// The operation is not valid for the current model state (e.g. unsharing a
// model that is not in shared-FFN mode).
class StateError : public Error {
 public:
  using Error::Error;
};

// A configuration or schedule failed validation. Messages carry a
// path-qualified location such as "schedule[2].steps".
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A checkpoint on disk is inconsistent with its manifest.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Malformed command-line usage or op-spec grammar.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace progrow
