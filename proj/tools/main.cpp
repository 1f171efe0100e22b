#include <string>
#include <vector>

#include "calens/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return calens::cli::run(args);
}
