#include <iostream>

#include "phasefno/cli.hpp"

int main(int argc, char** argv) { return phasefno::cli::run(argc, argv, std::cout, std::cerr); }
