#include <cstdio>

int main() {
  std::puts("lmo: subcommands land here as modules come online");
  return 0;
}
