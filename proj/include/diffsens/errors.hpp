#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace diffsens {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (time out of range,
// non-finite point, malformed mixture).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API used in a combination it does not support (e.g. CCoV on an SDE path).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Non-finite state encountered while integrating.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Failure talking to an external score process. Carries the raw reply line.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, std::string raw = {})
      : Error(raw.empty() ? what : what + ": " + raw), raw_(std::move(raw)) {}
  const std::string& raw_reply() const noexcept { return raw_; }

 private:
  std::string raw_;
};

}  // namespace diffsens
