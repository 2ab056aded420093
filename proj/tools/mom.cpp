#include <iostream>

#include "mom/cli.hpp"

int main(int argc, char** argv) { return mom::run_cli(argc, argv, std::cout, std::cerr); }
