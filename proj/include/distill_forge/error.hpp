#pragma once

#include <stdexcept>
#include <string>

namespace distill_forge {

/// Failure category; maps one-to-one onto CLI exit codes.
enum class ErrorKind {
  kIo = 1,
  kValidation = 2,
  kUpstream = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

inline Error validation_error(const std::string& what) {
  return Error(ErrorKind::kValidation, what);
}

inline Error io_error(const std::string& what) {
  return Error(ErrorKind::kIo, what);
}

}  // namespace distill_forge
