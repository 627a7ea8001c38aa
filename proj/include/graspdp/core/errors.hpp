#pragma once

#include <stdexcept>
#include <string>

namespace graspdp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidTaskError : public Error {
 public:
  using Error::Error;
};

class InvalidActionError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
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

class ExpertFailure : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Raised when a checkpoint or dataset declares a format version this build
// does not read.
class VersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, std::string last_good)
      : Error(what), last_good_checkpoint(std::move(last_good)) {}
  std::string last_good_checkpoint;
};

// Field-level validation failure; `field` names the offending input.
class ValidationError : public Error {
 public:
  ValidationError(std::string field_name, const std::string& what)
      : Error(what), field(std::move(field_name)) {}
  std::string field;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class BusyError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace graspdp
