#include "fdg/cli.hpp"

int main(int argc, char** argv) { return fdg::cli_main(argc, argv); }
