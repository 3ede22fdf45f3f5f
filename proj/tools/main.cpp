#include <string>
#include <vector>

#include "iftsplat/harness.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return iftsplat::run_cli(args);
}
