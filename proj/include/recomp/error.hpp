// Error types shared across the library. Every failure carries a kind so the
// CLI can map it to an exit code and a one-line machine-parseable message.

#pragma once

#include <stdexcept>
#include <string>

namespace recomp {

enum class ErrorKind {
  Dimension,      // shape mismatch between tensors
  Domain,         // value outside the documented domain
  Index,          // id/index out of range
  Contract,       // precondition violated (non-scalar loss, empty input, ...)
  Parse,          // malformed input text
  Io,             // filesystem failure
  Corrupt,        // checksum mismatch / truncated binary file
  Version,        // unsupported format version
  ModelKind,      // checkpoint holds a different model type
  VocabMismatch,  // tone/chord vocab fingerprints disagree
  NonFinite,      // NaN/Inf reached a value that must stay finite
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Dimension:     return "dimension";
    case ErrorKind::Domain:        return "domain";
    case ErrorKind::Index:         return "index";
    case ErrorKind::Contract:      return "contract";
    case ErrorKind::Parse:         return "parse";
    case ErrorKind::Io:            return "io";
    case ErrorKind::Corrupt:       return "corrupt";
    case ErrorKind::Version:       return "version";
    case ErrorKind::ModelKind:     return "model-kind";
    case ErrorKind::VocabMismatch: return "vocab-mismatch";
    case ErrorKind::NonFinite:     return "non-finite";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  std::string oneline() const {
    return std::string("error: ") + error_kind_name(kind_) + ": " + what();
  }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(int line, const std::string& message)
      : Error(ErrorKind::Parse, "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace recomp
