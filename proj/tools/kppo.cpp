#include "kppo/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return kppo::cli::main(argc, argv, std::cout, std::cerr); }
