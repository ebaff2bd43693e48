#include "chartsim/harness/cli.hpp"

int main(int argc, char** argv) { return chartsim::run_cli(argc, argv); }
