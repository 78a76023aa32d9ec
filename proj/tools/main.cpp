#include "sir/harness.hpp"

int main(int argc, char** argv) { return sir::run_cli(argc, argv); }
