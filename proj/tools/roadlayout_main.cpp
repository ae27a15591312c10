#include "roadlayout/cli.hpp"

int main(int argc, char** argv) { return roadlayout::run(argc, argv); }
