#ifndef P3D_PARALLEL_HPP
#define P3D_PARALLEL_HPP

#include <cstdint>
#include <functional>

namespace p3d {

/// Process-wide worker count used by data-parallel loops. Affects speed
/// only: every parallelized loop writes disjoint outputs, so results are
/// identical for any thread count.
void set_thread_count(int n);
int thread_count();

/// Apply fn(i) for i in [0, n). Items are distributed statically across
/// thread_count() workers; the first exception thrown by any worker is
/// rethrown on the calling thread after all workers join.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

} // namespace p3d

#endif
