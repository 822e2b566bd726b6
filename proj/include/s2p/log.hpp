#pragma once

#include <string_view>

namespace s2p {

/// Diagnostics go to stderr; set S2P_QUIET=1 to silence info lines.
void log_info(std::string_view msg);
void log_warning(std::string_view msg);
void set_quiet(bool quiet);

}  // namespace s2p
