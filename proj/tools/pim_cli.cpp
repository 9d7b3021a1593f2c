#include <iostream>

#include "pim/cli.hpp"

int main(int argc, char** argv) { return pim::cli::run(argc, argv, std::cout, std::cerr); }
