#include "imitate/threading.hpp"

#include <Eigen/Core>
#include <cstdlib>
#include <thread>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#ifdef _OPENMP
#include <omp.h>
#endif

namespace imitate {

namespace {
int resolve_thread_count() {
    if (const char* env = std::getenv("IMITATE_NUM_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}
}  // namespace

void init_threading() {
    int n = resolve_thread_count();
#ifdef _OPENMP
    omp_set_num_threads(n);
#endif
    Eigen::setNbThreads(n);
#ifdef __GLIBC__
    // Training reallocates the same large activation buffers every step;
    // keep them on the heap instead of handing pages back to the kernel.
    mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif
}

int num_threads() { return resolve_thread_count(); }

}  // namespace imitate
