// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "aqtc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return aqtc::run_cli(args, std::cout, std::cerr);
}
