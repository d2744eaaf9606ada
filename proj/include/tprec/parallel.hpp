#pragma once

// Thread-count control shared by every OpenMP kernel. TPREC_THREADS caps the
// worker count; unset or invalid values leave the OpenMP default in place.

namespace tprec {

/// Number of worker threads kernels will use.
int worker_count();

/// Applies TPREC_THREADS (if set) to the OpenMP runtime. Idempotent.
void configure_threads_from_env();

/// Overrides the worker count (tests and benchmarks).
void set_worker_count(int n);

}  // namespace tprec
