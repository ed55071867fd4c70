#include <cstdio>

int main() {
  std::puts("hubmt: subcommands not wired yet");
  return 1;
}
