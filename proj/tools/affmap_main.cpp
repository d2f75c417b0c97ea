#include <iostream>
#include <string>
#include <vector>

#include "affmap/cli.hpp"

int main(int argc, char** argv) {
  return affmap::cli_main(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
