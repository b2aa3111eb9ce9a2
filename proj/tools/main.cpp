#include "asynclc/cli.hpp"

int main(int argc, char** argv) { return asynclc::run_cli(argc, argv); }
