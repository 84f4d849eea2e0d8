#include <string>
#include <vector>

#include "specadv/cli.hpp"

int main(int argc, char** argv) {
  return specadv::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
