#include <iostream>

#include "sbnn/cli.hpp"

int main(int argc, char** argv) { return sbnn::cli_main(argc, argv, std::cout, std::cerr); }
