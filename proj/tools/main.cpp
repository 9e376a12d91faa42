#include "commands.hpp"

int main(int argc, char** argv) { return metagnn::cli::run_cli(argc, argv); }
