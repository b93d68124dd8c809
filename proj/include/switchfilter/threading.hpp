#pragma once
// Fork-join helpers for the embarrassingly parallel pieces (Monte Carlo paths,
// experiment cells). Parallelism never changes results: workers fill disjoint
// index ranges of pre-sized buffers, and reductions run as a deterministic
// serial pairwise sum afterwards, so a run with SWITCHFILTER_THREADS=1 is
// bit-identical to one with 16.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace switchfilter {

// Hardware concurrency, capped by the SWITCHFILTER_THREADS environment
// variable when it parses to a positive integer.
inline int worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("SWITCHFILTER_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap >= 1 && (unsigned long)cap < hw) hw = (unsigned)cap;
  }
  return (int)hw;
}

// Invoke body(begin, end) on contiguous chunks of [0, n) across workers.
template <class Body>
void parallel_for(std::int64_t n, Body&& body) {
  if (n <= 0) return;
  const std::int64_t workers = std::min<std::int64_t>(worker_count(), n);
  if (workers == 1) {
    body((std::int64_t)0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (std::int64_t w = 1; w < workers; ++w) {
    const std::int64_t lo = w * chunk;
    const std::int64_t hi = std::min(n, lo + chunk);
    if (lo < hi) pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  body((std::int64_t)0, std::min(n, chunk));
  for (auto& th : pool) th.join();
}

// Order-fixed pairwise summation: deterministic and far more accurate than a
// running sum over 1e6-scale Monte Carlo buffers.
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& x) {
  return pairwise_sum(x.data(), x.size());
}

}  // namespace switchfilter
