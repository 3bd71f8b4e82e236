#include <iostream>
#include <string>
#include <vector>

#include "gradecf/cli.hpp"

int main(int argc, char** argv) {
  return gradecf::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
