// Acceptance suite: one pass/fail line per criterion. Placeholder while the
// protocol stack comes up.
#include <cstdio>

int main() {
  std::printf("acceptance suite not yet wired\n");
  return 1;
}
