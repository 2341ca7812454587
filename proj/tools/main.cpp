#include "compvid/cli.hpp"

int main(int argc, char** argv) { return compvid::run_cli(argc, argv); }
