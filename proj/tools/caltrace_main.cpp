#include <iostream>
#include <string>
#include <vector>

#include "caltrace/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return caltrace::cli::dispatch(args, std::cout, std::cerr);
}
