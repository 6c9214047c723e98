#pragma once

#include <stdexcept>
#include <string>

namespace catos {

enum class ErrorKind {
  InvalidArgument,
  Config,
  Io,
  Format,
  NotFound,
  Conflict,
  State,
  MalformedHeader,
  NotPcm,
  Truncated,
  LinkClosed,
};

const char* error_kind_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace catos
