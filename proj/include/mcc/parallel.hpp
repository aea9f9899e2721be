#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mcc {

// Library-wide worker count. 0 means "OpenMP default"; 1 forces serial
// execution everywhere (the mode the determinism contract is stated for,
// although every kernel here is written to give identical results at any
// thread count: disjoint output slots, fixed-order reductions, per-index
// RNG streams).
void set_num_threads(int n);
int num_threads();

template <typename Body>
void parallel_for(std::int64_t n, Body&& body) {
#ifdef _OPENMP
  int workers = num_threads();
  if (workers != 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(workers > 0 ? workers : omp_get_max_threads())
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
#endif
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

// For few, unevenly sized units of work (per-node training, per-class OVA
// fits). Scheduling never affects results: bodies write disjoint slots.
template <typename Body>
void parallel_for_uneven(std::int64_t n, Body&& body) {
#ifdef _OPENMP
  int workers = num_threads();
  if (workers != 1 && n > 1) {
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers > 0 ? workers : omp_get_max_threads())
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
#endif
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

}  // namespace mcc
