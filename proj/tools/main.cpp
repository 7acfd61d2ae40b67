#include <iostream>

#include "jrl/cli.hpp"

int main(int argc, char** argv) { return jrl::run_cli(argc, argv, std::cout, std::cerr); }
