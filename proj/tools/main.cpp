#include "flowsentry/cli.hpp"

int main(int argc, char** argv) { return flowsentry::dispatch(argc, argv); }
