#include "experiment.hpp"

int main(int argc, char** argv) { return optresp::cli_main(argc, argv); }
