#include "cli.hpp"

int main(int argc, char** argv) { return robustcbf::cli::main_entry(argc, argv); }
