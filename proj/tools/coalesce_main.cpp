#include "coalesce/cli.hpp"

int main(int argc, char** argv) { return coalesce::cli::run(argc, argv); }
