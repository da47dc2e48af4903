#include "diffsens/cli.hpp"

int main(int argc, char** argv) { return diffsens::cli_main(argc, argv); }
