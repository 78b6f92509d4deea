#include <CLI11.hpp>

#include "radfuse/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"radfuse"};
  CLI11_PARSE(app, argc, argv);
  return 0;
}
