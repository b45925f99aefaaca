#pragma once

#include "hwsched/diffusion.hpp"

#include <cstddef>
#include <cstdint>
#include <exception>

namespace hwsched::detail {

/// Runs f(k) for k in [0, n). Exceptions thrown by workers are rethrown on the caller.
template <class F>
void for_each_index(std::size_t n, Backend backend, F&& f) {
    if (backend == Backend::serial) {
        for (std::size_t k = 0; k < n; ++k) f(k);
        return;
    }
    std::exception_ptr error;
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t k = 0; k < count; ++k) {
        try {
            f(static_cast<std::size_t>(k));
        } catch (...) {
#pragma omp critical(hwsched_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace hwsched::detail
