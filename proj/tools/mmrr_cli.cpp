#include "mmrr/app/cli.hpp"

int main(int argc, char** argv) { return mmrr::app::run_cli(argc, argv); }
