#include "hddf/cli.hpp"

int main(int argc, char** argv) { return hddf::cli_main(argc, argv); }
