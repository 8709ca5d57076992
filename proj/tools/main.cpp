#include "sadir/cli.hpp"

int main(int argc, char **argv) { return sadir::run_cli(argc, argv); }
