#pragma once

#include <stdexcept>
#include <string>

namespace djl {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A covariance or precision matrix could not be factorized even after
/// jitter escalation.
class FactorizationFailure : public Error {
 public:
  using Error::Error;
};

/// The rejection sampler exceeded its proposal cap (numerical defect).
class SamplerStall : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// Archive and dataset time grids disagree.
class GridMismatch : public Error {
 public:
  using Error::Error;
};

/// AUC requested with only one class present.
class DegenerateLabels : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A record in a data file violates the schema (message carries the line).
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Prediction and truth keys do not match (message lists offenders).
class KeyMismatch : public Error {
 public:
  using Error::Error;
};

/// Archive header is corrupt or from an unsupported format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace djl
