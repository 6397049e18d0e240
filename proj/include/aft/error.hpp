#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aft {

enum class ErrorCode {
  unknown_txn,
  not_running,
  not_readable,
  storage_error,
  invalid_argument,
  protocol_error,
  unavailable,
};

std::string_view to_string(ErrorCode code);
ErrorCode error_code_from_string(std::string_view name);

/// Base of every error the shim reports. The code is what travels on the
/// wire; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class StorageError : public Error {
 public:
  explicit StorageError(const std::string& message)
      : Error(ErrorCode::storage_error, message) {}
};

// Thrown by crash hooks to emulate the process dying at a given point.
// A TxnManager that observes one marks itself crashed and refuses all
// further work.
class InjectedCrash : public std::runtime_error {
 public:
  explicit InjectedCrash(std::string point)
      : std::runtime_error("injected crash at " + point), point_(std::move(point)) {}

  const std::string& point() const noexcept { return point_; }

 private:
  std::string point_;
};

}  // namespace aft
