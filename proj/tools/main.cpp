#include <iostream>

#include "warpadam/cli.hpp"

int main(int argc, char** argv) { return warpadam::cli_main(argc, argv, std::cout, std::cerr); }
