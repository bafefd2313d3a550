#include "ccnet/cli.hpp"

int main(int argc, char** argv) { return ccnet::dispatch(argc, argv); }
