#include "jumpfbsde/cli.hpp"

int main(int argc, char** argv) { return jumpfbsde::run_cli(argc, argv); }
