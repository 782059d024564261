#include "ross/cli.hpp"

int main(int argc, char** argv) { return ross::cli::main(argc, argv); }
