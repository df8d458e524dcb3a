#include <string>
#include <vector>

#include "mprobe/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mprobe::cli::run_cli(args);
}
