#pragma once

#include <stdexcept>
#include <string>

namespace s2p {

/// Failure categories. The C API and the CLI map these onto stable codes.
enum class ErrorKind {
  Usage,          // bad flag / config value
  Config,         // unsupported architecture or resolution
  Dimension,      // tensor shape mismatch
  Domain,         // value outside the accepted range
  Dataset,        // empty or undecodable dataset
  Io,
  Load,           // missing/corrupt weight or checkpoint file
  Divergence,     // non-finite loss
  Compatibility,  // checkpoint vs requested architecture
  Protocol,       // evaluation protocol violated
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace s2p
