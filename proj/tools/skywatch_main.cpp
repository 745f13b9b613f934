#include <iostream>

#include "skywatch/cli.hpp"

int main(int argc, char** argv) { return skywatch::cli::run(argc, argv, std::cout, std::cerr); }
