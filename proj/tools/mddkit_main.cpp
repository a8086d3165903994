#include <string>
#include <vector>

#include "mddkit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mddkit::run_cli(std::move(args));
}
