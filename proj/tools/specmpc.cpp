#include <iostream>

#include "specmpc/cli.hpp"

int main(int argc, char** argv) { return specmpc::run_cli(argc, argv, std::cout, std::cerr); }
