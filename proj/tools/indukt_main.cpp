#include <iostream>

#include "indukt/cli.hpp"

int main(int argc, char** argv) { return indukt::cli::run(argc, argv, std::cout, std::cerr); }
