#include <iostream>

#include "tdprobe/cli.hpp"

int main(int argc, char** argv) { return tdprobe::run_cli(argc, argv, std::cout, std::cerr); }
