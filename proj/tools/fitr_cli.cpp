#include "fitr/cli/app.hpp"

int main(int argc, char** argv) { return fitr::cli::run_cli(argc, argv); }
