#include "crossvae/cli.hpp"

int main(int argc, char** argv) { return crossvae::run_cli(argc, argv); }
