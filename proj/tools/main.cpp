#include "alea/cli.hpp"

int main(int argc, char** argv) { return alea::cli_main(argc, argv); }
