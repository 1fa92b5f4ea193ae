#include "exprsaug/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace exprsaug::parallel {

#ifdef _OPENMP
bool available() noexcept { return true; }
int max_threads() noexcept { return omp_get_max_threads(); }
void set_threads(int n) noexcept { omp_set_num_threads(n < 1 ? 1 : n); }
#else
bool available() noexcept { return false; }
int max_threads() noexcept { return 1; }
void set_threads(int) noexcept {}
#endif

}  // namespace exprsaug::parallel
