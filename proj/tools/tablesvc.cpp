#include "tablesvc/harness.hpp"

int main(int argc, char** argv) { return tablesvc::run_cli(argc, argv); }
