#include "polymerlab/cli.hpp"

int main(int argc, char** argv) { return polymerlab::cli::run_cli(argc, argv); }
