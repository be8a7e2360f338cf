#include "hardball/cli.hpp"

int main(int argc, char** argv) { return hardball::run(argc, argv); }
