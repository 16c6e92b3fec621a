#include <mvmom/cli.hpp>

#include <iostream>

int main(int argc, char** argv) { return mvmom::cli::run(argc, argv, std::cout, std::cerr); }
