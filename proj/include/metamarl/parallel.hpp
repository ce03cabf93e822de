#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace metamarl {

struct JobFailure {
  int job = -1;
  std::string error;
};

// Runs fn(0..n_jobs-1), OpenMP-parallel when workers > 1. Jobs must write
// only to their own slot; results are then independent of the worker count.
// Returns the failures (empty on success) in job order.
template <typename F>
std::vector<JobFailure> run_parallel(int n_jobs, int workers, F&& fn) {
  std::vector<std::string> errors(static_cast<size_t>(n_jobs));
  std::vector<unsigned char> failed(static_cast<size_t>(n_jobs), 0);
  auto run_one = [&](int i) {
    try {
      fn(i);
    } catch (const std::exception& e) {
      errors[static_cast<size_t>(i)] = e.what();
      failed[static_cast<size_t>(i)] = 1;
    } catch (...) {
      errors[static_cast<size_t>(i)] = "unknown error";
      failed[static_cast<size_t>(i)] = 1;
    }
  };
#ifdef _OPENMP
  if (workers > 1) {
#pragma omp parallel for num_threads(workers) schedule(dynamic)
    for (int i = 0; i < n_jobs; ++i) run_one(i);
  } else {
    for (int i = 0; i < n_jobs; ++i) run_one(i);
  }
#else
  (void)workers;
  for (int i = 0; i < n_jobs; ++i) run_one(i);
#endif
  std::vector<JobFailure> failures;
  for (int i = 0; i < n_jobs; ++i)
    if (failed[static_cast<size_t>(i)])
      failures.push_back({i, errors[static_cast<size_t>(i)]});
  return failures;
}

inline void throw_on_failure(const std::vector<JobFailure>& failures) {
  if (!failures.empty())
    throw std::runtime_error("job " + std::to_string(failures.front().job) +
                             " failed: " + failures.front().error);
}

}  // namespace metamarl
