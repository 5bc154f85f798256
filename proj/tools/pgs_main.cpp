#include "pgs/cli/commands.hpp"

int main(int argc, char** argv) { return pgs::cli::run(argc, argv); }
