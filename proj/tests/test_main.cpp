#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "s2p/log.hpp"

int main(int argc, char** argv) {
  s2p::set_quiet(true);
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
