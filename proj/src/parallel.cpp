#include "tprec/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tprec {

int worker_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void configure_threads_from_env() {
  const char* raw = std::getenv("TPREC_THREADS");
  if (raw == nullptr) return;
  try {
    int n = std::stoi(raw);
    if (n >= 1) set_worker_count(n);
  } catch (const std::exception&) {
    // ignored: keep runtime default
  }
}

void set_worker_count(int n) {
#ifdef _OPENMP
  if (n >= 1) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace tprec
