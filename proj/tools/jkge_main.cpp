#include "jkge/cli.hpp"

int main(int argc, char** argv) { return jkge::cli::run(argc, argv); }
