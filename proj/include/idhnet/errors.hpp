#pragma once

#include <stdexcept>
#include <string>

namespace idhnet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or grid shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A file header, payload or config document is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Values violate a data invariant (non-finite, out of range).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Requested key (edge pair, graph id, parameter name) does not exist.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// No edge survived the quorum filter.
class EmptyAtlasError : public Error {
 public:
  using Error::Error;
};

/// A stage would read subjects outside the recorded training split.
class SplitLeakageError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint header does not match its config or the data it is applied to.
class CheckpointMismatchError : public Error {
 public:
  using Error::Error;
};

/// Training or explanation produced a non-finite objective.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace idhnet
