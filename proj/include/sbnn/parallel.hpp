#pragma once

namespace sbnn {

// Applies the SBNN_THREADS cap (if set) to the OpenMP runtime.
// Returns the thread count that parallel regions will use.
int configure_threads_from_env();

int max_threads();

}  // namespace sbnn
