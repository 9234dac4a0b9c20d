#include <iostream>

#include "qksdp/cli.hpp"

int main(int argc, char **argv) {
  return qksdp::run_cli(argc, argv, std::cout, std::cerr);
}
