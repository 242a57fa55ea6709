#include "hombif/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return hombif::cli::run(argc, argv, std::cout, std::cerr); }
