#include <string>
#include <vector>

#include "taskexplore/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return taskexplore::run_cli(args);
}
