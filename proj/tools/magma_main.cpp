#include <iostream>

#include "magma/cli/commands.hpp"

int main(int argc, char** argv) { return magma::cli::run(argc, argv, std::cout, std::cerr); }
