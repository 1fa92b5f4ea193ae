#pragma once

// Thin wrapper over the OpenMP runtime so the rest of the code builds
// unchanged without OpenMP. Parallel loops use `#pragma omp` directly;
// without -fopenmp those pragmas are ignored and the loops run serially.

namespace exprsaug::parallel {

bool available() noexcept;
int max_threads() noexcept;
/// Caps the worker count for subsequent parallel regions (n >= 1).
void set_threads(int n) noexcept;

}  // namespace exprsaug::parallel
