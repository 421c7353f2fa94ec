// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "loopport/cli.hpp"

int main(int argc, char** argv) { return loopport::cli::main(argc, argv, std::cout, std::cerr); }
