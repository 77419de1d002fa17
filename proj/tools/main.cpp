#include "recomp/cli.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Activations are large and short-lived; keep them on the heap instead of
  // paying an mmap/munmap and page faults per layer call.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return recomp::run_cli(argc, argv);
}
