#include <iostream>

#include "fdiag/cli.hpp"

int main(int argc, char** argv) { return fdiag::cli::main(argc, argv, std::cout, std::cerr); }
