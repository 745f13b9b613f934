#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace skywatch {

/// Worker count from an explicit request, falling back to SKYWATCH_THREADS
/// and then to 1.
int resolve_threads(int requested);

/// Runs fn(k) for k in [0, n) over `threads` workers using contiguous chunks.
/// Callers write results into slot k so the outcome is schedule independent.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), n);
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            const std::size_t begin = n * w / workers;
            const std::size_t end = n * (w + 1) / workers;
            try {
                for (std::size_t k = begin; k < end; ++k) fn(k);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace skywatch
