#pragma once

#include <stdexcept>
#include <string>

namespace lee {

enum class ErrorKind { Config, Io, Validation, Scorer, Runtime };

/// All library failures surface as this exception; `kind` drives the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

} // namespace lee
