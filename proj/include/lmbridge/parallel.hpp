// Deterministic parallel loops.
//
// Work is split by index, every task writes only to its own slot, and callers
// reduce in index order afterwards, so results cannot depend on thread
// scheduling. Nested parallel regions degrade to serial execution.
#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace lmbridge {

namespace detail {
inline thread_local bool inside_parallel_region = false;
}

// Number of worker threads: LMBRIDGE_THREADS if set, hardware concurrency
// otherwise, never less than 1.
inline int parallel_thread_count() {
    if (const char* env = std::getenv("LMBRIDGE_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0, n). fn must only write to per-index state. If any
// invocation throws, the exception of the smallest index is rethrown after
// all threads have joined.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    const int threads = std::min(n, parallel_thread_count());
    if (threads == 1 || detail::inside_parallel_region) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }

    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t]() {
            detail::inside_parallel_region = true;
            // Strided assignment keeps the index -> thread map independent of timing.
            for (int i = t; i < n; i += threads) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (int i = 0; i < n; ++i)
        if (errors[i]) std::rethrow_exception(errors[i]);
}

}  // namespace lmbridge
