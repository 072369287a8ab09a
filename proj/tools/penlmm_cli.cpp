#include "penlmm/cli.hpp"

int main(int argc, char** argv) { return penlmm::run_cli(argc, argv); }
