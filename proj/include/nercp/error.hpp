#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nercp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent caller input (dimensions, ranges, lengths).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A label sequence uses a transition the structural mask forbids.
class ForbiddenPathError : public Error {
 public:
  using Error::Error;
};

/// The mask leaves no admissible path for the requested length.
class EmptyPathSpaceError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// Query against a stratum or entity class that has no calibrated threshold.
class UncalibratedError : public Error {
 public:
  using Error::Error;
};

/// Operations combined in a way their contracts do not allow.
class UsageError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(int step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace nercp
