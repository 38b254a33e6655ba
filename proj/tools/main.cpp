#include "cesopt/cli.hpp"

int main(int argc, char** argv) { return cesopt::cli::run(argc, argv); }
