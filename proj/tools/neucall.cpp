#include "neucall/cli.hpp"

int main(int argc, char** argv) { return neucall::run_cli(argc, argv); }
