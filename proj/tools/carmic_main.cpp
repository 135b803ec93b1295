#include <iostream>
#include <string>
#include <vector>

#include "carmic/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return carmic::cli_main(args, std::cout, std::cerr);
}
