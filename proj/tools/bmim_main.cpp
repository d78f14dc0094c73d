#include "bmim/cli.hpp"

int main(int argc, char** argv) { return bmim::cli::run(argc, argv); }
