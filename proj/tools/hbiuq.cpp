#include <iostream>

#include "hbiuq/cli.hpp"

int main(int argc, char** argv) { return hbiuq::cli::run(argc, argv, std::cout, std::cerr); }
