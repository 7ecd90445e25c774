#include "tubeil/commands.hpp"

int main(int argc, char** argv) { return tubeil::run_cli(argc, argv); }
