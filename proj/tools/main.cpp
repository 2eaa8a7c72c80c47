#include <iostream>

#include "sparsesense/cli.hpp"

int main(int argc, char** argv) { return sparsesense::run_cli(argc, argv, std::cout, std::cerr); }
