#include "s2p/error.hpp"

namespace s2p {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage: return "usage error";
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Dataset: return "dataset error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Load: return "load error";
    case ErrorKind::Divergence: return "training divergence";
    case ErrorKind::Compatibility: return "compatibility error";
    case ErrorKind::Protocol: return "protocol error";
  }
  return "error";
}

}  // namespace s2p
