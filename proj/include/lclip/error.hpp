#pragma once

#include <stdexcept>
#include <string>

namespace lclip {

// Base for every library error. CLI maps subclasses to exit codes:
// config/validation -> 2, numerical failure -> 3, I/O -> 4.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class LengthError : public Error {
public:
  using Error::Error;
};

class IndexError : public Error {
public:
  using Error::Error;
};

class DegenerateInputError : public Error {
public:
  using Error::Error;
};

class DegenerateBatchError : public Error {
public:
  using Error::Error;
};

class DeterminismError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

class TokenizationError : public Error {
public:
  using Error::Error;
};

class TrainingError : public Error {
public:
  TrainingError(const std::string& msg, long step) : Error(msg), step_(step) {}
  long step() const { return step_; }

private:
  long step_ = -1;
};

class UndefinedCorrelationError : public Error {
public:
  using Error::Error;
};

class DataError : public Error {
public:
  using Error::Error;
};

class DomainError : public Error {
public:
  using Error::Error;
};

class ContractError : public Error {
public:
  using Error::Error;
};

class PreconditionError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace lclip
