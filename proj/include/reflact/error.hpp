#pragma once

#include <stdexcept>
#include <string>

namespace reflact {

// Broad failure classes. The C API maps these one-to-one onto rf_status.
enum class ErrorCode {
  invalid_argument,
  unsupported,
  config,
  io,
  backend,
  precondition,
  internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace reflact
