#include "cli.hpp"

int main(int argc, char** argv) { return towerlab::cli::run(argc, argv); }
