#pragma once

namespace imitate {

/// Applies the IMITATE_NUM_THREADS cap to OpenMP and Eigen. Call once at
/// process start; safe to call again.
void init_threading();

int num_threads();

}  // namespace imitate
