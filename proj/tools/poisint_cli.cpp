#include <iostream>
#include <string>
#include <vector>

#include "poisint/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return poisint::run(args, std::cout, std::cerr);
}
