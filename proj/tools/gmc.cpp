#include "gmc/cli.hpp"

int main(int argc, char** argv) { return gmc::cli_main(argc, argv); }
