#include "dirlap/cli.hpp"

int main(int argc, char** argv) { return dirlap::cli::run(argc, argv); }
