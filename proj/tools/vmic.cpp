// vmic.cpp -- command line front end (placeholder while the library lands).
#include <cstdio>

int main() {
  std::puts("vmic: not wired up yet");
  return 1;
}
