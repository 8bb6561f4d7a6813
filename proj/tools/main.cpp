#include <iostream>

#include "ipnmt/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ipnmt::cli::run(args, std::cout, std::cerr);
}
