#include "mshoot/cli.hpp"

#include <iostream>

int main(int argc, char **argv) {
  return mshoot::dispatch(argc, argv, std::cout, std::cerr);
}
