#include <iostream>
#include <string>
#include <vector>

#include "photonchain/cli.hpp"

int main(int argc, char** argv) {
  return photonchain::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
