#include <iostream>

#include "ivcace_cli/commands.hpp"

int main(int argc, char** argv) { return ivcace::cli::run_cli(argc, argv, std::cout, std::cerr); }
