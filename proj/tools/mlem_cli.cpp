#include "cli.hpp"

int main(int argc, char** argv) { return mlem::cli::run_cli(argc, argv); }
