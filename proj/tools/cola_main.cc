#include <iostream>

#include "cola/cli.h"

int main(int argc, char** argv) { return cola::run_cli(argc, argv, std::cout, std::cerr); }
