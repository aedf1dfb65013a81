#pragma once

#include <stdexcept>
#include <string>

namespace caslie {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration or precondition detected before any side effect.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-contract input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Network failure, timeout, or retries exhausted.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Upstream answered with a non-retryable status or an unparseable body.
class ProtocolError : public Error {
 public:
  ProtocolError(int status, const std::string& what)
      : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

}  // namespace caslie
