#include <iostream>
#include <string>
#include <vector>

#include "cfaudit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cfaudit::run_cli(args, std::cout, std::cerr);
}
