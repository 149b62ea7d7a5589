#include "cloudiff/app/commands.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return cloudiff::app::run_cli(argc, argv, std::cout, std::cerr);
}
