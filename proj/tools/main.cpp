#include "qamatch/cli.hpp"

int main(int argc, char** argv) { return qamatch::run_cli(argc, argv); }
