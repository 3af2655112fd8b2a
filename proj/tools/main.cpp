#include <iostream>

#include "mctp/cli.hpp"

int main(int argc, char** argv) {
    return mctp::cli::main_entry(argc, argv, std::cout, std::cerr);
}
