#include <iostream>
#include <string>
#include <vector>

#include "aggsplit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return aggsplit::cli::main(args, std::cout, std::cerr);
}
