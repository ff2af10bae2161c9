#include "cli_commands.hpp"

int main(int argc, char** argv) { return shyp::cli::main(argc, argv); }
