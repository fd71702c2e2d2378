#include "tspike/cli.hpp"

int main(int argc, char** argv) {
    return tspike::cli_dispatch(argc, argv);
}
