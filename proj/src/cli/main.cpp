#include "varigan/cli/cli.hpp"

int main(int argc, char** argv) {
  return varigan::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
