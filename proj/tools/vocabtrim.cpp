#include "vocabtrim/cli.hpp"

int main(int argc, char ** argv) {
    return vocabtrim::run_cli(argc, argv);
}
