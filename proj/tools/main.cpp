#include "ncanet/cli.hpp"

int main(int argc, char** argv) { return ncanet::run_cli(argc, argv); }
