#include "fexp/cli.hpp"

int main(int argc, char** argv) { return fexp::cli::main_entry(argc, argv); }
