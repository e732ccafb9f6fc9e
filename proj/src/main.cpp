#include <string>
#include <vector>

#include "attcal/cli_lib.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return attcal::run_cli(args);
}
