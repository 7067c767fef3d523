#include <iostream>

#include "triggerlab/cli/commands.h"

int main(int argc, char** argv) {
  return triggerlab::cli::run_cli(argc, argv, std::cout, std::cerr);
}
