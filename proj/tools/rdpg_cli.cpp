#include "rdpg/cli.hpp"

int main(int argc, char** argv) { return rdpg::cli_main(argc, argv); }
