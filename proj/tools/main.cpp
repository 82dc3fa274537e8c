#include "splitloc/cli.hpp"

int main(int argc, char** argv) {
    return splitloc::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
