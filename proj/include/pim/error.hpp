#pragma once

#include <stdexcept>
#include <string>

namespace pim {

// Base of every error the toolkit throws. Subclasses let callers (the CLI,
// the HTTP layer) map failures to exit codes and status codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class ChannelMismatch : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class ProcessError : public Error {
 public:
  ProcessError(const std::string& what, int exit_code, std::string stderr_text)
      : Error(what), exit_code_(exit_code), stderr_(std::move(stderr_text)) {}

  int exit_code() const noexcept { return exit_code_; }
  const std::string& stderr_text() const noexcept { return stderr_; }

 private:
  int exit_code_;
  std::string stderr_;
};

}  // namespace pim
