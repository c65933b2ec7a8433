#include "lumaforge/cli.hpp"

int main(int argc, char** argv) {
  return lumaforge::cli::run(argc, argv);
}
