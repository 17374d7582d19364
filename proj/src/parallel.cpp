#include "sbnn/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

#include "sbnn/errors.hpp"

namespace sbnn {

int configure_threads_from_env() {
  if (const char* env = std::getenv("SBNN_THREADS"); env != nullptr && *env != '\0') {
    int cap = 0;
    try {
      cap = std::stoi(env);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidConfig, std::string("SBNN_THREADS is not an integer: ") + env);
    }
    if (cap < 1) fail(ErrorCode::InvalidConfig, "SBNN_THREADS must be >= 1");
    if (cap < omp_get_max_threads()) omp_set_num_threads(cap);
  }
  return omp_get_max_threads();
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace sbnn
