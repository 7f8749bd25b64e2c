#include <iostream>

#include "mrm/cli.hpp"

int main(int argc, char** argv) { return mrm::cli::run_cli(argc, argv, std::cout, std::cerr); }
