#include <string>
#include <vector>

#include "sphgal/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sphgal::cli_run(args);
}
