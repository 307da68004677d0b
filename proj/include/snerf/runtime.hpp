#pragma once

namespace snerf {

/// Keeps large training temporaries on the heap instead of fresh mmap/munmap
/// pairs every step. Call once at process start; a no-op off glibc.
void tune_allocator();

}  // namespace snerf
