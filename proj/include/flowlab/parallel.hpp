#pragma once

#include <cstddef>
#include <utility>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace flowlab::par {

// Every parallel entry point takes an Exec. Serial is the reference
// implementation; Parallel must produce bit-identical results, which the
// fixed-chunk scheme below guarantees as long as cross-element reductions
// happen per chunk and chunks are combined in index order.
enum class Exec { Serial, Parallel };

// Worker cap: min(OMP max threads, FLOWLAB_THREADS if set). Re-read on each
// call so tests can flip the environment variable.
int max_threads();

inline std::size_t chunk_count(std::size_t n, std::size_t chunk_size) {
  return chunk_size == 0 ? 0 : (n + chunk_size - 1) / chunk_size;
}

// body(begin, end, chunk_index); the chunk layout depends only on
// (n, chunk_size), never on the thread count.
template <class F>
void for_chunks(std::size_t n, std::size_t chunk_size, Exec mode, F&& body) {
  if (n == 0) return;
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t chunks = chunk_count(n, chunk_size);
#if defined(_OPENMP)
  if (mode == Exec::Parallel && chunks > 1 && max_threads() > 1) {
    const int nt = max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(nt)
    for (long long c = 0; c < static_cast<long long>(chunks); ++c) {
      const std::size_t begin = static_cast<std::size_t>(c) * chunk_size;
      const std::size_t end = begin + chunk_size < n ? begin + chunk_size : n;
      body(begin, end, static_cast<std::size_t>(c));
    }
    return;
  }
#else
  (void)mode;
#endif
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t begin = c * chunk_size;
    const std::size_t end = begin + chunk_size < n ? begin + chunk_size : n;
    body(begin, end, c);
  }
}

// Independent per-element work; no reductions allowed inside.
template <class F>
void for_each(std::size_t n, Exec mode, F&& body) {
  for_chunks(n, 1, mode, [&](std::size_t begin, std::size_t, std::size_t) { body(begin); });
}

}  // namespace flowlab::par
