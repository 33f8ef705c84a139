#include <iostream>

#include "cdsd/cli/commands.hpp"

int main(int argc, char** argv) { return cdsd::cli::run(argc, argv, std::cout, std::cerr); }
