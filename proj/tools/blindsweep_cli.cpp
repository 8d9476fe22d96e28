#include "blindsweep/cli.hpp"

int main(int argc, char** argv) { return blindsweep::cli::run_command(argc, argv); }
