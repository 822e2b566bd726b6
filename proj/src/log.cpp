#include "s2p/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace s2p {

namespace {
std::mutex g_log_mutex;
std::atomic<bool> g_quiet{false};

bool quiet() {
  if (g_quiet) return true;
  const char* q = std::getenv("S2P_QUIET");
  return q != nullptr && *q != '\0' && *q != '0';
}
}  // namespace

void set_quiet(bool quiet) { g_quiet = quiet; }

void log_info(std::string_view msg) {
  if (quiet()) return;
  std::lock_guard lock(g_log_mutex);
  std::cerr << "[s2p] " << msg << '\n';
}

void log_warning(std::string_view msg) {
  std::lock_guard lock(g_log_mutex);
  std::cerr << "[s2p] warning: " << msg << '\n';
}

}  // namespace s2p
