#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace lgwae::detail {

/// Runs body(i) for i in [0, n) with dynamic OpenMP scheduling. Exceptions
/// cannot cross the parallel region, so the one from the lowest index is
/// captured and rethrown after the loop.
template <class Body>
void parallel_for(std::size_t n, bool parallel, Body&& body) {
  std::exception_ptr error;
  std::size_t error_index = n;
  std::mutex lock;
  const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (long long i = 0; i < nn; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> guard(lock);
      if (static_cast<std::size_t>(i) < error_index) {
        error_index = static_cast<std::size_t>(i);
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace lgwae::detail
