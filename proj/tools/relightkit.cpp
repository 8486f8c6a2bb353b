// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#include "relightkit/cli.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <iostream>

int main(int argc, char** argv) {
#ifdef __GLIBC__
    // Keep large training buffers on the heap instead of fresh mappings per step.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    return rlk::run_cli(argc, argv, std::cout, std::cerr);
}
