#include "flowlab/parallel.hpp"

#include <cstdlib>
#include <string>

namespace flowlab::par {

int max_threads() {
  int cap = 1;
#if defined(_OPENMP)
  cap = omp_get_max_threads();
#endif
  if (const char* env = std::getenv("FLOWLAB_THREADS")) {
    try {
      const int requested = std::stoi(env);
      if (requested >= 1 && requested < cap) cap = requested;
    } catch (...) {
      // ignore malformed values, keep the OMP default
    }
  }
  return cap < 1 ? 1 : cap;
}

}  // namespace flowlab::par
