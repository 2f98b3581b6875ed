#include "openfl/cli.hpp"

int main(int argc, char** argv) { return openfl::cli_main(argc, argv); }
