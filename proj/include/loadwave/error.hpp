#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace loadwave {

enum class ErrorCode {
  invalid_argument,
  insufficient_data,
  parse_error,
  counter_wrap,
  permission_error,
  resource_error,
  scheduling_error,
  capacity_error,
  io_error,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::insufficient_data: return "insufficient-data";
    case ErrorCode::parse_error: return "parse-error";
    case ErrorCode::counter_wrap: return "counter-wrap";
    case ErrorCode::permission_error: return "permission-error";
    case ErrorCode::resource_error: return "resource-error";
    case ErrorCode::scheduling_error: return "scheduling-error";
    case ErrorCode::capacity_error: return "capacity-error";
    case ErrorCode::io_error: return "io-error";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can branch on the category.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace loadwave
