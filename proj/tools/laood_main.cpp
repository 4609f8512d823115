#include <iostream>
#include <string>
#include <vector>

#include "laood/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return laood::cli::run(args, std::cout, std::cerr);
}
