#include <iostream>
#include <string>
#include <vector>

#include "voxalign/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return voxalign::cli::run(args, std::cout, std::cerr);
}
