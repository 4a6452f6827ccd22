#include <iostream>

#include "daf/cli/commands.hpp"

int main(int argc, char** argv) { return daf::cli::run(argc, argv, std::cout, std::cerr); }
