#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace pslab {

/// Keeps large matrix temporaries on the heap instead of fresh mmap pages.
/// Training allocates many 0.5 MB blocks per step; with glibc defaults each
/// one is page-faulted in and unmapped again. Idempotent.
inline void tune_allocator() {
#if defined(__GLIBC__)
  static const bool tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)tuned;
#endif
}

}  // namespace pslab
