#include "nvtherm/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return nvtherm::cli::run_cli(argc, argv, std::cout, std::cerr); }
