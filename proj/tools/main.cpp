#include "lyapdg/cli.hpp"

int main(int argc, char** argv) { return lyapdg::cli_main(argc, argv); }
