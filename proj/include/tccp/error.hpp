#pragma once

#include <stdexcept>
#include <string>

namespace tccp {

// Exit codes of the command-line tool map one-to-one onto these kinds.
enum class ErrorKind { config = 2, data = 3, divergence = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch)
      : Error(ErrorKind::divergence, what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

// Re-throws `e` with `stage` prefixed to the message, preserving its kind.
[[noreturn]] inline void rethrow_in_stage(const std::string& stage, const Error& e) {
  const std::string msg = stage + ": " + e.what();
  switch (e.kind()) {
    case ErrorKind::config:
      throw ConfigError(msg);
    case ErrorKind::divergence:
    {
      const auto* div = dynamic_cast<const DivergenceError*>(&e);
      throw DivergenceError(msg, div ? div->epoch() : -1);
    }
    case ErrorKind::data:
    default:
      throw DataError(msg);
  }
}

}  // namespace tccp
