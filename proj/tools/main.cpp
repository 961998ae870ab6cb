#include <iostream>
#include <string>
#include <vector>

#include "mwnmt/cli.hpp"

int main(int argc, char** argv) {
  return mwnmt::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
