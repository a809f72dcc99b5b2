// SPDX-License-Identifier: Apache-2.0
#include <malloc.h>

#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  // Training allocates many short-lived buffers of a few hundred KB; keeping
  // them on the heap instead of fresh mappings avoids page-fault churn.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
  std::vector<std::string> args(argv + 1, argv + argc);
  return ptsc::cli::run(args, std::cout, std::cerr);
}
