#include "cli_app.hpp"

int main(int argc, char** argv) { return featfuse::cli::RunCli(argc, argv); }
