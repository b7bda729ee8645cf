#include "prefsdm/commands.hpp"

int main(int argc, char** argv) { return prefsdm::run_cli(argc, argv); }
