#include "agentrec/cli.hpp"

int main(int argc, char** argv) { return agentrec::cli::run(argc, argv); }
