#include <iostream>

#include "chatdqn/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return chatdqn::run_cli(args, std::cin, std::cout, std::cerr);
}
