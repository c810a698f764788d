#pragma once

#include <stdexcept>
#include <string>

namespace agentreg {

enum class ErrorKind {
  kDimension,
  kDegenerateInput,
  kConfig,
  kContract,
  kInsufficientData,
  kDegenerateConfiguration,
  kEstimationFailure,
  kIo,
  kFormat,
  kNumerical,
};

const char* to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace agentreg
