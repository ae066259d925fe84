#pragma once

#include <stdexcept>
#include <string>

namespace hierbias {

// Error categories map onto CLI exit codes: usage 1, data/invariant 2,
// numerical 3.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Grammar generation failures (unsatisfiable options, exhausted capacity).
class GenerationError : public DataError {
 public:
  using DataError::DataError;
};

// Malformed trees or token sequences that violate a structural precondition.
class StructureError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace hierbias
