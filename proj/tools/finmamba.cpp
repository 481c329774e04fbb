#include <iostream>

#include "finmamba/cli.hpp"

int main(int argc, char** argv) { return finmamba::cli::run(argc, argv, std::cout, std::cerr); }
