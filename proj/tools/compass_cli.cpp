#include "compass/cli.hpp"

int main(int argc, char** argv) { return compass::cli::run(argc, argv); }
