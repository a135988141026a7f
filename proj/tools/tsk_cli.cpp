#include <iostream>

#include "tsk/cli.hpp"

int main(int argc, char** argv) { return tsk::cli::run(argc, argv, std::cout, std::cerr); }
