#include <iostream>
#include <string>
#include <vector>

#include "geosent/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return geosent::cli::dispatch(args, std::cout, std::cerr);
}
