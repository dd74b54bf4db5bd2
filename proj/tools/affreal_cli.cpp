#include "affreal/cli/commands.hpp"

int main(int argc, char** argv) { return affreal::cli::run(argc, argv); }
