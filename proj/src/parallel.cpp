#include "relabund/parallel.hpp"

#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace relabund::mc {

void run_replicates(int n, int threads, const std::function<void(int)>& body) {
#ifdef _OPENMP
  if (threads == 1) {
    run_replicates_serial(n, body);
    return;
  }
  if (threads <= 0) threads = omp_get_max_threads();
  // Exceptions may not cross the parallel region; capture per slot and
  // rethrow the first by replicate index so propagation is deterministic.
  std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (int r = 0; r < n; ++r) {
    try {
      body(r);
    } catch (...) {
      errors[static_cast<size_t>(r)] = std::current_exception();
    }
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
#else
  (void)threads;
  run_replicates_serial(n, body);
#endif
}

void run_replicates_serial(int n, const std::function<void(int)>& body) {
  for (int r = 0; r < n; ++r) body(r);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace relabund::mc
