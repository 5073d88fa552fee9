#include <iostream>

#include "tndve/cli.hpp"

int main(int argc, char** argv) {
  return tndve::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
