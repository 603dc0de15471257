#include <iostream>

#include "tabqa/bench.hpp"

int main(int argc, char** argv) {
    return tabqa::run_cli(argc, argv, std::cout, std::cerr);
}
