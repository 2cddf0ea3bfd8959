#include "halo/cli.hpp"

int main(int argc, char** argv) { return halo::cli::main(argc, argv); }
