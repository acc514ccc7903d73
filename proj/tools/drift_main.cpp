#include <cstdio>

int main() {
  std::puts("driftbench: CLI wiring pending");
  return 0;
}
