#pragma once

// Index-parallel loop with a serial reference path. Results are written to
// per-index slots by the callee, so the caller's reduction order (and hence
// every floating-point result) does not depend on the thread count.

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>

#include <omp.h>

#include "bayescv/core.hpp"

namespace bayescv {

/// Runs body(i) for i in [0, count). On failure the exception from the
/// lowest failing index is rethrown, whatever the thread count.
template <class Body>
void parallel_for(std::int64_t count, Exec exec, Body&& body) {
  if (exec == Exec::serial || count < 2) {
    for (std::int64_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::atomic<std::int64_t> failed_at{count};
  std::mutex guard;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < count; ++i) {
    // Indices below the lowest failure so far still run, so the reported
    // failure is the lowest failing index.
    if (i > failed_at.load(std::memory_order_relaxed)) continue;
    try {
      body(i);
    } catch (...) {
      std::lock_guard lock(guard);
      if (i < failed_at.load()) {
        failed_at.store(i);
        failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace bayescv
