#include "cli_app.hpp"

int main(int argc, char** argv) { return more::cli::run(argc, argv); }
