#include <iostream>

#include "livo_cli/commands.hpp"

int main(int argc, char** argv) { return livo::cli::runMain(argc, argv, std::cout, std::cerr); }
