#include "ssmi/commands.hpp"

int main(int argc, char** argv) { return ssmi::run_cli(argc, argv); }
