#include <string>
#include <vector>

#include "geomix/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return geomix::run(std::move(args));
}
