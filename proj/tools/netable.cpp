#include "netable/cli/cli.hpp"

int main(int argc, char** argv) { return netable::cli::dispatch(argc, argv); }
