#include "var/workbench.hpp"

int main(int argc, char** argv) { return var::workbench::run_cli(argc, argv); }
