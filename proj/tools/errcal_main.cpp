#include <iostream>

#include "errcal/cli.hpp"

int main(int argc, char** argv) { return errcal::cli_main(argc, argv, std::cout, std::cerr); }
