#pragma once

#include <stdexcept>
#include <string>

namespace embench {

// Base of every error thrown by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data or a violated record invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Inconsistent or missing configuration (mapping files, manifests, train
// configs, provider configs).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An embedding source could not produce a vector (store miss, dimension
// mismatch, malformed response).
class ProviderError : public Error {
 public:
  using Error::Error;
};

// Remote call failed after all retries. Carries the last HTTP status, or 0
// when the connection itself failed.
class TransportError : public ProviderError {
 public:
  TransportError(const std::string& what, int last_status)
      : ProviderError(what), last_status_(last_status) {}

  int last_status() const noexcept { return last_status_; }

 private:
  int last_status_;
};

}  // namespace embench
