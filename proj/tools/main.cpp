#include "cli.hpp"

int main(int argc, char** argv) { return slscan::cli::run_cli(argc, argv); }
