// Error type shared by the library and the CLI.
#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ordstab {

// Categories are stable strings; the CLI prints them on stderr so callers can
// dispatch on failure kind without parsing the message.
enum class ErrorCategory { usage, io, parse, data, config, numeric };

inline const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::io: return "io";
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::data: return "data";
    case ErrorCategory::config: return "config";
    case ErrorCategory::numeric: return "numeric";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string message)
      : std::runtime_error(std::move(message)), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace ordstab
