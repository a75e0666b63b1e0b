#include "iiwgee/cli.hpp"

int main(int argc, char** argv) { return iiwgee::cli::cli_main(argc, argv); }
