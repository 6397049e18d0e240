#include "aft/error.hpp"

#include <array>
#include <utility>

namespace aft {

namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 7> kNames{{
    {ErrorCode::unknown_txn, "unknown_txn"},
    {ErrorCode::not_running, "not_running"},
    {ErrorCode::not_readable, "not_readable"},
    {ErrorCode::storage_error, "storage_error"},
    {ErrorCode::invalid_argument, "invalid_argument"},
    {ErrorCode::protocol_error, "protocol_error"},
    {ErrorCode::unavailable, "unavailable"},
}};

}  // namespace

std::string_view to_string(ErrorCode code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "protocol_error";
}

ErrorCode error_code_from_string(std::string_view name) {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return ErrorCode::protocol_error;
}

}  // namespace aft
