#include <iostream>
#include <string>
#include <vector>

#include "cwt/cli.hpp"

int main(int argc, char** argv) {
  return cwt::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
