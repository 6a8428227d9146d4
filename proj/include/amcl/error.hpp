#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace amcl {

// Base for every error raised by the library. Each subclass maps to a
// distinct CLI exit code (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

// File could not be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

// Malformed input record. line is 1-based, 0 when not applicable.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  int exit_code() const noexcept override { return 4; }

 private:
  std::size_t line_;
};

// Input is well formed but unusable (empty corpus, constant list, n < 2, ...).
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 5; }
};

// Argument violates an operation precondition (dimension mismatch, bad enum, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 6; }
};

// Failure talking to an external learner. Carries the sequence number of the
// request that was in flight.
class LearnerError : public Error {
 public:
  LearnerError(const std::string& what, std::uint64_t seq)
      : Error(what + " (seq " + std::to_string(seq) + ")"), message_(what), seq_(seq) {}
  std::uint64_t seq() const noexcept { return seq_; }
  // Message without the sequence suffix.
  const std::string& message() const noexcept { return message_; }
  int exit_code() const noexcept override { return 7; }

 private:
  std::string message_;
  std::uint64_t seq_;
};

class LearnerExitedError : public LearnerError {
 public:
  using LearnerError::LearnerError;
  int exit_code() const noexcept override { return 8; }
};

class LearnerReplyError : public LearnerError {
 public:
  using LearnerError::LearnerError;
  int exit_code() const noexcept override { return 9; }
};

class LearnerTimeoutError : public LearnerError {
 public:
  using LearnerError::LearnerError;
  int exit_code() const noexcept override { return 10; }
};

}  // namespace amcl
