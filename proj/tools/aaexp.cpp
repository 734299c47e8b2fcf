#include <iostream>
#include <string>
#include <vector>

#include "aaexp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return aaexp::run_cli(args, std::cout, std::cerr);
}
