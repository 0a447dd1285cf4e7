#include "cli.hpp"

int main(int argc, char** argv) { return ircr::cli::run(argc, argv); }
