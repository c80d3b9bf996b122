#include <iostream>

#include "nemo/cli.hpp"

int main(int argc, char** argv) {
  return nemo::run_cli({argv, argv + argc}, std::cout, std::cerr);
}
