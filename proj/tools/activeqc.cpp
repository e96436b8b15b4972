#include "activeqc/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return aqc::cli::run_cli(argc, argv, std::cout, std::cerr); }
