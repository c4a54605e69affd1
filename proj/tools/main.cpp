#include "cli.hpp"

int main(int argc, char** argv) { return nbcoll::cli::main(argc, argv); }
