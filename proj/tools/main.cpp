#include "derain/cli.hpp"

int main(int argc, char** argv) { return derain::cli::run(argc, argv); }
