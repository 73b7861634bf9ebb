#pragma once

#include <stdexcept>
#include <string>

namespace ptlab {

// Error categories map 1:1 onto CLI exit codes (see tools/ptlab.cpp).
enum class ErrorCategory {
  usage,     // bad flags / argument combinations
  config,    // config schema violation
  io,        // missing or unreadable file, corrupt container
  data,      // dataset validation failure
  train,     // runtime training failure (NaN loss, divergence)
  internal,  // shape errors, misuse of the tape, bugs
};

const char* category_name(ErrorCategory c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(msg), cat_(cat) {}

  ErrorCategory category() const { return cat_; }

 private:
  ErrorCategory cat_;
};

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return "usage";
    case ErrorCategory::config: return "config";
    case ErrorCategory::io: return "io";
    case ErrorCategory::data: return "data";
    case ErrorCategory::train: return "train";
    case ErrorCategory::internal: return "internal";
  }
  return "internal";
}

}  // namespace ptlab
