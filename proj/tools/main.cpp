#include <iostream>

#include "charparse/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return charparse::run_cli(args, std::cout, std::cerr);
}
