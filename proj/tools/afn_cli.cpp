#include "afn/cli.hpp"

int main(int argc, char** argv) { return afn::cli::run(argc, argv); }
