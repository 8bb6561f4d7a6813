#pragma once

#include <stdexcept>
#include <string>

namespace ipnmt {

// Root of every error thrown by the library. Subclasses name the contract
// that was broken so callers (the CLI, the HTTP layer) can map them to exit
// codes and status codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};
class NumericError : public Error {
 public:
  using Error::Error;
};
class PreconditionError : public Error {
 public:
  using Error::Error;
};
class VocabularyError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class InputError : public Error {
 public:
  using Error::Error;
};
class StateError : public Error {
 public:
  using Error::Error;
};
class AlignmentError : public Error {
 public:
  using Error::Error;
};
// Feedback rule rejected: conflicts with the rule set or targets a position
// the user was not asked about.
class RuleError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Raised by constrained decoding when the rules remove every candidate.
class ConstraintExhausted : public Error {
 public:
  ConstraintExhausted(std::size_t position, const std::string& what)
      : Error(what), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

}  // namespace ipnmt
