// Copyright 2026 The speclab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace speclab {

// Runs f(i) for i in [0, n). Tasks must write disjoint output slots; results
// are then identical for any thread count. threads <= 0 uses the OpenMP
// default.
template <typename F>
void parallel_for(int n, int threads, F&& f) {
#ifdef _OPENMP
  if (threads == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  if (threads > 0) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (int i = 0; i < n; ++i) f(i);
  } else {
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) f(i);
  }
#else
  (void)threads;
  for (int i = 0; i < n; ++i) f(i);
#endif
}

}  // namespace speclab
