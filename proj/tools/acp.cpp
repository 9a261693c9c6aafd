#include <iostream>

#include "acp/cli.hpp"

int main(int argc, char** argv) { return acp::run_cli(argc, argv, std::cout, std::cerr); }
