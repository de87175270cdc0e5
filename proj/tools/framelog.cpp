#include "framelog/cli.hpp"

int main(int argc, char** argv) { return framelog::cli::run(argc, argv); }
