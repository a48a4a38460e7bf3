// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "mfn/cli/commands.hpp"

int main(int argc, char** argv) { return mfn::cli::run_command(argc, argv, std::cout, std::cerr); }
