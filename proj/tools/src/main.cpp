#include "autokg_tools/commands.hpp"

int main(int argc, char** argv) { return autokg::cli::run_cli(argc, argv); }
