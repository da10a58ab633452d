#include "mrdl/cli.hpp"

int main(int argc, char** argv) { return mrdl::cli::run(argc, argv); }
