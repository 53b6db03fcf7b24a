#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#include <omp.h>

namespace kgmlsm {

/// Execution policy for sample-parallel kernels. `serial` is the reference
/// path; `parallel` must produce bit-identical results.
enum class Exec { serial, parallel };

inline int max_workers() { return omp_get_max_threads(); }

/// Calls body(i, worker) for i in [0, n). `worker` is in [0, max_workers()).
/// The first exception thrown by any iteration is rethrown on the caller.
template <class Body>
void for_each_index(std::size_t n, Exec exec, Body&& body) {
    if (exec == Exec::serial || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i, 0);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (long long i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i), omp_get_thread_num());
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace kgmlsm
