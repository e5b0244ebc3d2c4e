#include "cota/cli.hpp"

int main(int argc, char** argv) { return cota::cli::run(argc, argv); }
