#include <vector>

#include "styleforge/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return styleforge::cli::dispatch(args);
}
