#include "dermamap/cli.hpp"

int main(int argc, char** argv) { return dermamap::run_cli(argc, argv); }
