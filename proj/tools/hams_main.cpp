#include "hams/cli.hpp"

int main(int argc, char** argv) { return hams::cli_main(argc, argv); }
