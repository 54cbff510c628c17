#include <iostream>

#include "ibis/commands.hpp"

int main(int argc, char** argv) { return ibis::run_cli(argc, argv, std::cout, std::cerr); }
