#include <iostream>

#include "smoa/cli.hpp"

int main(int argc, char** argv) {
    return smoa::cli::run(argc, argv, std::cout, std::cerr);
}
