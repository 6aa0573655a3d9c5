#include <iostream>

#include "saratoga/cli.hpp"

int main(int argc, char** argv) {
  return saratoga::cli::run_cli(argc, argv, std::cout, std::cerr);
}
