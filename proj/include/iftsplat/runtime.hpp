#pragma once

#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace iftsplat {

/// Execution policy for the data-parallel kernels. `serial` is the reference
/// path; `parallel` uses OpenMP but keeps the exact same reduction order, so
/// both must produce bitwise-identical results.
enum class Exec { serial, parallel };

/// Thread budget for parallel kernels. Capped by the IFTSPLAT_THREADS
/// environment variable when set.
inline int thread_budget() {
  static const int budget = [] {
#ifdef _OPENMP
    int n = omp_get_max_threads();
#else
    int n = 1;
#endif
    if (const char* cap = std::getenv("IFTSPLAT_THREADS")) {
      const int c = std::atoi(cap);
      if (c >= 1 && c < n) n = c;
    }
    return n;
  }();
  return budget;
}

/// Runs f(0..n-1). Parallel iterations must write to disjoint locations.
template <class F>
void run_indexed(int n, Exec exec, F&& f) {
#ifdef _OPENMP
  if (exec == Exec::parallel && thread_budget() > 1) {
#pragma omp parallel for schedule(static) num_threads(thread_budget())
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
#else
  (void)exec;
#endif
  for (int i = 0; i < n; ++i) f(i);
}

}  // namespace iftsplat
