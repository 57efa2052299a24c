#include <iostream>

#include "beamlink/cli.hpp"

int main(int argc, char** argv) { return beamlink::cli::run(argc, argv, std::cout, std::cerr); }
