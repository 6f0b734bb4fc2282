#include <iostream>

#include "hyp/cli.hpp"

int main(int argc, char** argv) { return hyp::run_cli(argc, argv, std::cout, std::cerr); }
