#include <iostream>
#include <string>
#include <vector>

#include "icas/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return icas::cli::run(args, std::cout, std::cerr);
}
