#include "bnp/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return bnp::cli::main_entry(argc, argv, std::cout, std::cerr); }
