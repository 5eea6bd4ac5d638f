#include "asrl/cli.hpp"

int main(int argc, char** argv) {
    return asrl::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
